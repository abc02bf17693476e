"""Random forest of CART trees over Gini impurity.

Each tree is grown on a bootstrap resample, split on the best of a random
sqrt(d) feature subset (scanning further features only when none of the
subset admits a valid split), and grown out to purity or single-sample
leaves.  A leaf stores the class frequencies of its training samples; the
forest's probability is the plain mean of the leaf distributions across
trees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError, ShapeError
from .base import (
    N_LEVELS,
    ClassifierSpec,
    TrainedModel,
    TrainingReport,
    _check_training_labels,
)


@dataclass
class Tree:
    """Flat array form of one decision tree.

    ``feature[i] == -1`` marks node i as a leaf; ``distribution[i]`` is only
    meaningful at leaves.  Internal nodes send x to ``left`` when
    ``x[feature] <= threshold``.
    """

    feature: np.ndarray  # (nodes,) int32, -1 at leaves
    threshold: np.ndarray  # (nodes,) float64
    left: np.ndarray  # (nodes,) int32
    right: np.ndarray  # (nodes,) int32
    distribution: np.ndarray  # (nodes, 3) float64

    @property
    def n_nodes(self) -> int:
        return len(self.feature)


def _best_split(
    x: np.ndarray,
    y: np.ndarray,
    sample_idx: np.ndarray,
    feature_order: np.ndarray,
    max_features: int,
) -> tuple[int, float] | None:
    """Best (feature, threshold) by Gini gain, or None if unsplittable.

    Examines ``max_features`` features from ``feature_order``; if none of
    them admits a split (all values tied), keeps scanning the remaining
    features one at a time until the first valid split, matching the usual
    forest behaviour of never giving up while a valid partition exists.
    """
    m = len(sample_idx)
    best_score = -np.inf
    best: tuple[int, float] | None = None
    found_in_quota = False
    for rank, f in enumerate(feature_order):
        if rank >= max_features and found_in_quota:
            break
        vals = x[sample_idx, f]
        order = np.argsort(vals, kind="stable")
        v = vals[order]
        boundaries = np.flatnonzero(v[:-1] < v[1:])
        if len(boundaries) == 0:
            continue
        cls = y[sample_idx][order]
        onehot = np.zeros((m, N_LEVELS))
        onehot[np.arange(m), cls] = 1.0
        cum = np.cumsum(onehot, axis=0)
        left_n = boundaries + 1.0
        right_n = m - left_n
        left_counts = cum[boundaries]
        right_counts = cum[-1] - left_counts
        # Weighted Gini impurity equals m - (ssl/nl + ssr/nr) up to a
        # constant, so maximizing the bracket minimizes impurity.
        score = (left_counts**2).sum(axis=1) / left_n + (
            right_counts**2
        ).sum(axis=1) / right_n
        j = int(np.argmax(score))
        if score[j] > best_score + 1e-12:
            lo, hi = v[boundaries[j]], v[boundaries[j] + 1]
            thr = lo + (hi - lo) / 2.0
            if thr >= hi:  # midpoint rounded up to the right value
                thr = lo
            best_score = float(score[j])
            best = (int(f), float(thr))
        if rank < max_features:
            found_in_quota = True
        elif best is not None:
            break
    return best


def _grow_tree(
    x: np.ndarray, y: np.ndarray, rng: np.random.Generator
) -> Tree:
    n, d = x.shape
    max_features = max(1, int(np.sqrt(d)))
    bootstrap = rng.integers(0, n, size=n)

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    dist: list[np.ndarray] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        dist.append(np.zeros(N_LEVELS))
        return len(feature) - 1

    root = new_node()
    stack: list[tuple[int, np.ndarray]] = [(root, bootstrap)]
    while stack:
        node, idx = stack.pop()
        counts = np.bincount(y[idx], minlength=N_LEVELS).astype(np.float64)
        if len(idx) < 2 or counts.max() == len(idx):
            dist[node] = counts / counts.sum()
            continue
        split = _best_split(x, y, idx, rng.permutation(d), max_features)
        if split is None:
            dist[node] = counts / counts.sum()
            continue
        f, thr = split
        go_left = x[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node()
        right[node] = new_node()
        stack.append((left[node], idx[go_left]))
        stack.append((right[node], idx[~go_left]))

    return Tree(
        feature=np.array(feature, dtype=np.int32),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        distribution=np.stack(dist),
    )


def tree_apply(tree: Tree, x: np.ndarray) -> np.ndarray:
    """Leaf index reached by each row of x."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    node = np.zeros(x.shape[0], dtype=np.int64)
    while True:
        feat = tree.feature[node]
        active = np.flatnonzero(feat >= 0)
        if len(active) == 0:
            return node
        rows = active
        f = feat[rows]
        go_left = x[rows, f] <= tree.threshold[node[rows]]
        node[rows] = np.where(
            go_left, tree.left[node[rows]], tree.right[node[rows]]
        )


class ForestModel(TrainedModel):
    """A fitted random forest."""

    def __init__(
        self,
        spec: ClassifierSpec,
        trees: list[Tree],
        report: TrainingReport,
    ):
        self.family = spec.family
        self.spec = spec
        self.trees = trees
        self.report = report
        self.pca = None

    def _predict_batch(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros((x.shape[0], N_LEVELS))
        for tree in self.trees:
            out += tree.distribution[tree_apply(tree, x)]
        return out / len(self.trees)


def fit_random_forest(
    x: np.ndarray, y: np.ndarray, spec: ClassifierSpec | None = None
) -> ForestModel:
    """Grow ``spec.trees`` trees with per-tree generators spawned from the seed.

    Tree t draws its bootstrap and feature subsets from its own generator
    (SeedSequence(seed).spawn), so two fits with equal seeds are
    bit-identical and tree order never changes results.
    """
    if spec is None:
        spec = ClassifierSpec(family="random_forest")
    if spec.trees < 1:
        raise DataError(f"forest needs at least 1 tree, got {spec.trees}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"forest expects (n, d) features, got {x.shape}")
    y = _check_training_labels(y, require_all_levels=False)
    if x.shape[0] != len(y):
        raise ShapeError(f"{x.shape[0]} inputs vs {len(y)} labels")
    if x.shape[0] == 0:
        raise DataError("empty training set")

    children = np.random.SeedSequence(spec.seed).spawn(spec.trees)
    trees = [
        _grow_tree(x, y, np.random.default_rng(child)) for child in children
    ]
    report = TrainingReport(
        family=spec.family,
        seed=spec.seed,
        n_samples=x.shape[0],
        n_features=x.shape[1],
        details={
            "trees": spec.trees,
            "nodes": [t.n_nodes for t in trees],
        },
    )
    return ForestModel(spec=spec, trees=trees, report=report)
