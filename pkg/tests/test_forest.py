"""Random forest construction, splits, and probability aggregation."""

import numpy as np
import pytest

from engagekit.classifiers import ClassifierSpec
from engagekit.classifiers.forest import (
    Tree,
    _best_split,
    fit_random_forest,
    tree_apply,
)
from engagekit.errors import DataError

from .oracles import forest_proba_recompute, walk_tree


def blobs(rng, n_per=20, d=4, spread=0.6):
    centers = np.array(
        [[0.0] * d, [3.0] + [0.0] * (d - 1), [0.0, 3.0] + [0.0] * (d - 2)]
    )
    x = np.concatenate(
        [c + spread * rng.standard_normal((n_per, d)) for c in centers]
    )
    y = np.repeat(np.arange(3), n_per)
    return x, y


def brute_force_split(x, y, idx, features):
    """Exhaustive scan of every feature and boundary.

    Returns (score, feature, threshold) for the split maximizing
    ssl/nl + ssr/nr, preferring earlier features on ties the way a
    strict-improvement scan does.
    """
    best = (-np.inf, None, None)
    for f in features:
        vals = x[idx, f]
        order = np.argsort(vals, kind="stable")
        v = vals[order]
        cls = y[idx][order]
        for i in range(len(v) - 1):
            if not v[i] < v[i + 1]:
                continue
            lc = np.bincount(cls[: i + 1], minlength=3).astype(float)
            rc = np.bincount(cls[i + 1 :], minlength=3).astype(float)
            score = (lc**2).sum() / lc.sum() + (rc**2).sum() / rc.sum()
            if score > best[0] + 1e-12:
                thr = v[i] + (v[i + 1] - v[i]) / 2.0
                if thr >= v[i + 1]:
                    thr = v[i]
                best = (score, int(f), float(thr))
    return best


def split_score(x, y, idx, f, thr):
    vals = x[idx, f]
    go_left = vals <= thr
    lc = np.bincount(y[idx][go_left], minlength=3).astype(float)
    rc = np.bincount(y[idx][~go_left], minlength=3).astype(float)
    return (lc**2).sum() / lc.sum() + (rc**2).sum() / rc.sum()


class TestBestSplit:
    def test_obvious_single_feature(self):
        x = np.array([[0.0], [1.0], [10.0], [11.0]])
        y = np.array([0, 0, 1, 1])
        f, thr = _best_split(x, y, np.arange(4), np.array([0]), 1)
        assert f == 0
        assert thr == pytest.approx(5.5)

    def test_midpoint_threshold(self):
        x = np.array([[0.0], [1.0]])
        y = np.array([0, 1])
        _, thr = _best_split(x, y, np.arange(2), np.array([0]), 1)
        assert thr == pytest.approx(0.5)

    def test_ties_collapse_boundaries(self):
        # equal values cannot be separated; only the 0->1 boundary exists
        x = np.array([[0.0], [0.0], [1.0]])
        y = np.array([0, 1, 1])
        f, thr = _best_split(x, y, np.arange(3), np.array([0]), 1)
        assert f == 0
        assert thr == pytest.approx(0.5)

    def test_picks_informative_feature(self):
        rng = np.random.default_rng(0)
        x = np.column_stack(
            [rng.standard_normal(40), np.repeat([0.0, 5.0], 20)]
        )
        y = np.repeat([0, 1], 20)
        f, _ = _best_split(x, y, np.arange(40), np.array([0, 1]), 2)
        assert f == 1

    def test_constant_feature_no_split(self):
        x = np.ones((6, 1))
        y = np.array([0, 1, 0, 1, 0, 1])
        assert _best_split(x, y, np.arange(6), np.array([0]), 1) is None

    def test_quota_respected_when_valid(self):
        # feature 0 splits imperfectly, feature 1 perfectly; with a quota
        # of one the scan must stop at feature 0
        x = np.column_stack(
            [np.array([0.0, 1.0, 0.0, 1.0]), np.array([0.0, 0.0, 1.0, 1.0])]
        )
        y = np.array([0, 0, 1, 1])
        f, _ = _best_split(x, y, np.arange(4), np.array([0, 1]), 1)
        assert f == 0

    def test_scans_past_constant_quota(self):
        # the quota feature is constant, so scanning continues to the next
        x = np.column_stack(
            [np.ones(4), np.array([0.0, 0.0, 1.0, 1.0])]
        )
        y = np.array([0, 0, 1, 1])
        f, thr = _best_split(x, y, np.arange(4), np.array([0, 1]), 1)
        assert f == 1
        assert thr == pytest.approx(0.5)

    def test_matches_brute_force(self, rng):
        for _ in range(20):
            n, d = 30, 3
            x = rng.standard_normal((n, d))
            y = rng.integers(0, 3, size=n)
            idx = rng.integers(0, n, size=n)
            got = _best_split(x, y, idx, np.arange(d), d)
            want_score, want_f, _ = brute_force_split(x, y, idx, range(d))
            if got is None:
                assert want_f is None
                continue
            f, thr = got
            assert f == want_f
            assert split_score(x, y, idx, f, thr) == pytest.approx(
                want_score, abs=1e-9
            )


class TestTreeStructure:
    def one_tree(self, rng, seed=4):
        x, y = blobs(rng)
        spec = ClassifierSpec(family="random_forest", seed=seed, trees=1)
        return x, fit_random_forest(x, y, spec).trees[0]

    def test_leaf_distributions_sum_to_one(self, rng):
        _, tree = self.one_tree(rng)
        leaves = tree.feature < 0
        assert leaves.any()
        sums = tree.distribution[leaves].sum(axis=1)
        assert sums == pytest.approx(np.ones(leaves.sum()))
        assert np.all(tree.distribution >= 0)

    def test_links_are_consistent(self, rng):
        _, tree = self.one_tree(rng)
        internal = np.flatnonzero(tree.feature >= 0)
        # children exist and are distinct for every internal node
        assert np.all(tree.left[internal] > internal)
        assert np.all(tree.right[internal] > internal)
        assert np.all(tree.left[internal] != tree.right[internal])

    def test_tree_apply_matches_scalar_walk(self, rng):
        x, tree = self.one_tree(rng)
        probe = np.vstack([x, rng.standard_normal((25, x.shape[1]))])
        fast = tree_apply(tree, probe)
        slow = np.array([walk_tree(tree, row) for row in probe])
        assert np.array_equal(fast, slow)
        assert np.all(tree.feature[fast] == -1)

    def test_manual_tree_apply(self):
        tree = Tree(
            feature=np.array([0, -1, -1], dtype=np.int32),
            threshold=np.array([0.5, 0.0, 0.0]),
            left=np.array([1, -1, -1], dtype=np.int32),
            right=np.array([2, -1, -1], dtype=np.int32),
            distribution=np.array(
                [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]
            ),
        )
        got = tree_apply(tree, np.array([[0.2], [0.5], [0.9]]))
        # descend left when value <= threshold
        assert np.array_equal(got, [1, 1, 2])


class TestForest:
    def test_proba_equals_recomputed_leaf_means(self, rng):
        x, y = blobs(rng)
        spec = ClassifierSpec(family="random_forest", seed=3, trees=15)
        model = fit_random_forest(x, y, spec)
        probe = rng.standard_normal((30, x.shape[1]))
        got = model.predict_proba(probe)
        want = forest_proba_recompute(model, probe)
        assert np.array_equal(got, want)

    def test_distributions_valid(self, rng):
        x, y = blobs(rng)
        model = fit_random_forest(
            x, y, ClassifierSpec(family="random_forest", seed=0, trees=8)
        )
        p = model.predict_proba(x)
        assert p.sum(axis=1) == pytest.approx(np.ones(len(x)), abs=1e-12)
        assert np.all(p >= 0)

    def test_fixed_seed_bit_identical(self, rng):
        x, y = blobs(rng)
        spec = ClassifierSpec(family="random_forest", seed=77, trees=9)
        probe = rng.standard_normal((12, x.shape[1]))
        a = fit_random_forest(x, y, spec).predict_proba(probe)
        b = fit_random_forest(x, y, spec).predict_proba(probe)
        assert np.array_equal(a, b)

    def test_different_seeds_differ(self, rng):
        x, y = blobs(rng, spread=1.5)
        probe = rng.standard_normal((20, x.shape[1]))
        a = fit_random_forest(
            x, y, ClassifierSpec(family="random_forest", seed=1, trees=5)
        ).predict_proba(probe)
        b = fit_random_forest(
            x, y, ClassifierSpec(family="random_forest", seed=2, trees=5)
        ).predict_proba(probe)
        assert not np.array_equal(a, b)

    def test_learns_blobs(self, rng):
        x, y = blobs(rng)
        model = fit_random_forest(
            x, y, ClassifierSpec(family="random_forest", seed=6, trees=20)
        )
        pred = np.argmax(model.predict_proba(x), axis=1)
        assert (pred == y).mean() >= 0.95

    def test_two_level_training_allowed(self, rng):
        # forests tolerate an absent level; its column stays zero
        x, y = blobs(rng)
        keep = y != 2
        model = fit_random_forest(
            x[keep],
            y[keep],
            ClassifierSpec(family="random_forest", seed=0, trees=5),
        )
        p = model.predict_proba(x[:10])
        assert np.all(p[:, 2] == 0.0)

    def test_no_trees_rejected(self, rng):
        x, y = blobs(rng)
        with pytest.raises(DataError):
            fit_random_forest(
                x, y, ClassifierSpec(family="random_forest", seed=0, trees=0)
            )

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            fit_random_forest(
                np.zeros((0, 3)),
                np.zeros(0, dtype=int),
                ClassifierSpec(family="random_forest", seed=0, trees=3),
            )

    def test_single_point_constant_tree(self):
        model = fit_random_forest(
            np.array([[1.0, 2.0]]),
            np.array([1]),
            ClassifierSpec(family="random_forest", seed=0, trees=3),
        )
        p = model.predict_proba(np.array([[0.0, 0.0], [9.0, 9.0]]))
        assert np.array_equal(p, np.tile([0.0, 1.0, 0.0], (2, 1)))
