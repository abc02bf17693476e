"""Batch-mode active-learning personalization of a trained classifier.

A person-independent model proposes the pool items it is least sure about
(smallest top-two probability margin), a human oracle labels them in batches
of ten, and the classifier is retrained from scratch on the original
training set plus every personal label collected so far.  Six episodes (60
labels) is the default budget.  A frozen personal test split tracks AUROC
after every episode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Protocol

import numpy as np

from .classifiers.base import (
    MIDDLE_FRAME_INDEX,
    ClassifierSpec,
    TrainedModel,
    train_classifier,
)
from .errors import (
    DataError,
    ExhaustedPoolError,
    OracleUnavailableError,
    ValueRangeError,
)
from .evaluation import weighted_auroc
from .fusion import ModalityPair, fuse_features
from .ingest import EngagementLevel, LabeledSequenceSet
from .tracklets import Sequence

PoolItem = Sequence | ModalityPair


@dataclass(frozen=True)
class PoolEntry:
    """One unlabeled student-second available for annotation."""

    pool_id: int
    item: PoolItem
    clip_ref: str

    def __post_init__(self):
        if self.pool_id < 0:
            raise DataError(f"negative pool_id {self.pool_id}")

    @property
    def second_index(self) -> int:
        if isinstance(self.item, ModalityPair):
            return self.item.attention.second_index
        return self.item.second_index


class UnlabeledPool:
    """Pool of annotation candidates, shrinking as labels arrive."""

    def __init__(self, entries: Iterable[PoolEntry]):
        self._entries: dict[int, PoolEntry] = {}
        for e in entries:
            if e.pool_id in self._entries:
                raise DataError(f"duplicate pool_id {e.pool_id}")
            self._entries[e.pool_id] = e
        self._remaining = set(self._entries)

    def __len__(self) -> int:
        return len(self._remaining)

    def remaining(self) -> list[PoolEntry]:
        return [self._entries[i] for i in sorted(self._remaining)]

    def entry(self, pool_id: int) -> PoolEntry:
        if pool_id not in self._remaining:
            raise DataError(f"pool_id {pool_id} not in the remaining pool")
        return self._entries[pool_id]

    def remove(self, pool_ids: Iterable[int]) -> None:
        ids = list(pool_ids)
        missing = [i for i in ids if i not in self._remaining]
        if missing:
            raise DataError(f"pool ids {missing} already taken or unknown")
        self._remaining -= set(ids)

    def copy(self) -> "UnlabeledPool":
        clone = UnlabeledPool([])
        clone._entries = dict(self._entries)
        clone._remaining = set(self._remaining)
        return clone


@dataclass(frozen=True)
class MarginQuery:
    """Uncertainty record for one pool entry."""

    pool_id: int
    margin: float
    top: int
    runner_up: int


class Oracle(Protocol):
    def label(self, pool_id: int) -> EngagementLevel: ...


class SimulatedOracle:
    """Oracle replaying ground-truth levels, for experiments and tests."""

    def __init__(self, truth: dict[int, EngagementLevel]):
        self.truth = dict(truth)
        self.calls = 0

    def label(self, pool_id: int) -> EngagementLevel:
        self.calls += 1
        try:
            return EngagementLevel(int(self.truth[pool_id]))
        except KeyError:
            raise OracleUnavailableError(
                f"simulated oracle has no label for pool_id {pool_id}"
            ) from None


def model_input(model: TrainedModel, item: PoolItem) -> np.ndarray:
    """The array a model consumes for one pool item.

    Frame-mode models see the middle frame (pairs: concatenated middle
    frames); the LSTM sees the full sequence (pairs: frame-wise
    concatenation).
    """
    sequence_mode = model.input_mode == "full_sequence"
    if isinstance(item, ModalityPair):
        if sequence_mode:
            return fuse_features(item.attention.frames, item.affect.frames)
        return fuse_features(
            item.attention.frames[MIDDLE_FRAME_INDEX],
            item.affect.frames[MIDDLE_FRAME_INDEX],
        )
    if sequence_mode:
        return item.frames
    return item.frames[MIDDLE_FRAME_INDEX]


def item_aggregate(model: TrainedModel, item: PoolItem) -> np.ndarray:
    """Per-second aggregate distribution used for evaluation curves."""
    if model.input_mode == "full_sequence":
        return model.predict_distribution(model_input(model, item))
    if isinstance(item, ModalityPair):
        frames = fuse_features(item.attention.frames, item.affect.frames)
    else:
        frames = item.frames
    return model.predict_proba(frames).mean(axis=0)


def margin_scores(model: TrainedModel, pool: UnlabeledPool) -> list[MarginQuery]:
    """Top-two probability margins over the remaining pool, by pool_id."""
    out = []
    for entry in pool.remaining():
        p = model.predict_distribution(model_input(model, entry.item))
        order = np.argsort(-p, kind="stable")
        out.append(
            MarginQuery(
                pool_id=entry.pool_id,
                margin=float(p[order[0]] - p[order[1]]),
                top=int(order[0]),
                runner_up=int(order[1]),
            )
        )
    return out


def select_batch(queries: list[MarginQuery], batch_size: int) -> list[int]:
    """The ``batch_size`` least-confident pool ids.

    Sorted by ascending margin, ties by ascending pool_id; the result is the
    same regardless of input order.
    """
    if batch_size < 1:
        raise DataError(f"batch_size must be >= 1, got {batch_size}")
    if len(queries) < batch_size:
        raise ExhaustedPoolError(
            f"pool holds {len(queries)} candidates, batch needs {batch_size}"
        )
    ranked = sorted(queries, key=lambda q: (q.margin, q.pool_id))
    return [q.pool_id for q in ranked[:batch_size]]


@dataclass
class TrainingBundle:
    """Person-independent training material a session retrains from."""

    spec: ClassifierSpec
    x: np.ndarray
    y: np.ndarray


@dataclass
class PersonalizationSession:
    """State of one student's labeling run."""

    token: str
    student_id: str
    bundle: TrainingBundle
    eval_items: list[PoolItem]
    eval_levels: np.ndarray
    model: TrainedModel
    episode: int = 0
    collected: list[tuple[int, PoolItem, EngagementLevel]] = field(
        default_factory=list
    )
    auroc_curve: list[float] = field(default_factory=list)


def _eval_auroc(
    model: TrainedModel, items: list[PoolItem], levels: np.ndarray
) -> float:
    dists = np.stack([item_aggregate(model, item) for item in items])
    return weighted_auroc(dists, levels)


def start_personalization(
    token: str,
    student_id: str,
    bundle: TrainingBundle,
    eval_items: list[PoolItem],
    eval_levels: np.ndarray,
    base_model: TrainedModel | None = None,
) -> PersonalizationSession:
    """Fit (or adopt) the person-independent model and score episode 0."""
    eval_levels = np.asarray(eval_levels, dtype=np.int64)
    if len(eval_items) != len(eval_levels):
        raise DataError("eval items and levels differ in length")
    if len(eval_items) == 0:
        raise DataError("personalization needs a non-empty eval split")
    if base_model is None:
        base_model = train_classifier(bundle.spec, bundle.x, bundle.y)
    session = PersonalizationSession(
        token=token,
        student_id=student_id,
        bundle=bundle,
        eval_items=list(eval_items),
        eval_levels=eval_levels,
        model=base_model,
    )
    session.auroc_curve.append(_eval_auroc(base_model, eval_items, eval_levels))
    return session


def propose_batch(
    session: PersonalizationSession,
    pool: UnlabeledPool,
    batch_size: int = 10,
    selector: str = "margin",
    rng: np.random.Generator | None = None,
) -> list[int]:
    """Choose the next batch without mutating anything.

    ``selector`` is "margin" (uncertainty sampling) or "random" (baseline
    for comparisons, needs ``rng``).
    """
    if selector == "margin":
        return select_batch(margin_scores(session.model, pool), batch_size)
    if selector == "random":
        if rng is None:
            raise DataError("random selection needs an rng")
        ids = [e.pool_id for e in pool.remaining()]
        if len(ids) < batch_size:
            raise ExhaustedPoolError(
                f"pool holds {len(ids)} candidates, batch needs {batch_size}"
            )
        picked = rng.choice(len(ids), size=batch_size, replace=False)
        return sorted(int(ids[i]) for i in picked)
    raise DataError(f"unknown selector {selector!r}")


def _retrain(
    session: PersonalizationSession,
    extra_items: list[PoolItem],
    extra_levels: list[EngagementLevel],
) -> TrainedModel:
    bundle = session.bundle
    rows = [model_input(session.model, item) for item in extra_items]
    prior_rows = [
        model_input(session.model, item) for _, item, _ in session.collected
    ]
    prior_levels = [int(lv) for _, _, lv in session.collected]
    x = np.concatenate(
        [bundle.x, np.stack(prior_rows + rows)]
        if prior_rows + rows
        else [bundle.x]
    )
    y = np.concatenate(
        [
            bundle.y,
            np.array(prior_levels + [int(lv) for lv in extra_levels], dtype=np.int64),
        ]
    )
    return train_classifier(bundle.spec, x, y, allow_missing_levels=True)


def apply_labels(
    session: PersonalizationSession,
    pool: UnlabeledPool,
    pool_ids: list[int],
    levels: list[EngagementLevel],
) -> float:
    """Retrain on the new labels and commit one episode atomically.

    All validation and the retraining happen before any state changes, so a
    failure anywhere leaves the session and pool exactly as they were.
    Returns the new AUROC point.
    """
    if len(pool_ids) != len(levels):
        raise DataError("pool_ids and levels differ in length")
    if len(set(pool_ids)) != len(pool_ids):
        raise DataError("duplicate pool_ids in one batch")
    checked_levels = []
    for lv in levels:
        if not 0 <= int(lv) <= 2:
            raise ValueRangeError(f"label {lv} outside the three levels")
        checked_levels.append(EngagementLevel(int(lv)))
    items = [pool.entry(pid).item for pid in pool_ids]

    new_model = _retrain(session, items, checked_levels)
    auroc = _eval_auroc(new_model, session.eval_items, session.eval_levels)

    pool.remove(pool_ids)
    session.collected.extend(zip(pool_ids, items, checked_levels))
    session.model = new_model
    session.episode += 1
    session.auroc_curve.append(auroc)
    return auroc


def personalize_episode(
    session: PersonalizationSession,
    pool: UnlabeledPool,
    oracle: Oracle,
    batch_size: int = 10,
    selector: str = "margin",
    rng: np.random.Generator | None = None,
) -> float:
    """One full episode: propose, ask the oracle, retrain, commit.

    An oracle failure aborts before any mutation; session and pool stay
    bit-identical to their state on entry.
    """
    ids = propose_batch(session, pool, batch_size, selector, rng)
    labels = [oracle.label(pid) for pid in ids]
    return apply_labels(session, pool, ids, labels)


def run_personalization(
    session: PersonalizationSession,
    pool: UnlabeledPool,
    oracle: Oracle,
    episodes: int = 6,
    batch_size: int = 10,
    selector: str = "margin",
    rng: np.random.Generator | None = None,
) -> list[float]:
    """Run the whole labeling budget; returns the AUROC curve.

    The curve has ``episodes + 1`` points: the person-independent baseline
    plus one point per episode, so zero episodes return just the baseline.
    The pool must hold the full budget up front, so a run never strands a
    half-finished batch.
    """
    if episodes < 0:
        raise DataError(f"episodes must be >= 0, got {episodes}")
    if len(pool) < episodes * batch_size:
        raise ExhaustedPoolError(
            f"pool holds {len(pool)} candidates, the budget needs "
            f"{episodes * batch_size}"
        )
    for _ in range(episodes):
        personalize_episode(session, pool, oracle, batch_size, selector, rng)
    return list(session.auroc_curve)


def export_curve(path, curve: list[float], batch_size: int = 10) -> None:
    """Write an AUROC curve as CSV: episode, labels_used, auroc."""
    import csv
    from pathlib import Path

    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["episode", "labels_used", "auroc"])
        for episode, auroc in enumerate(curve):
            writer.writerow([episode, episode * batch_size, repr(float(auroc))])


def split_personal_data(
    dataset: LabeledSequenceSet,
    student_id: str,
    features: str = "attention",
    eval_fraction: float = 0.5,
    seed: int = 0,
) -> tuple[UnlabeledPool, SimulatedOracle, list[PoolItem], np.ndarray]:
    """Split one student's data into an annotation pool and a frozen eval set.

    ``features`` is a single modality name or "feature_fusion" (paired
    items).  The split is random but fixed by ``seed``; pool ids are
    assigned in (session, second) order after the split.  Returns
    (pool, simulated oracle over ground truth, eval items, eval levels).
    """
    personal = dataset.filter(students=[student_id])
    if features == "feature_fusion":
        from .fusion import paired_entries

        pairs = paired_entries(personal)
        keyed = [
            (
                (p.pair.attention.session_id, p.pair.attention.second_index),
                p.pair,
                p.level,
            )
            for p in pairs
        ]
    else:
        sub = personal.filter(modality=features)
        keyed = [
            ((e.session_id, e.second_index), e.sequence, e.level)
            for e in sub.entries
        ]
    if not keyed:
        raise DataError(
            f"student {student_id!r} has no data for features {features!r}"
        )
    keyed.sort(key=lambda t: t[0])
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(keyed))
    n_eval = int(round(eval_fraction * len(keyed)))
    if n_eval < 2 or len(keyed) - n_eval < 1:
        raise DataError(
            f"student {student_id!r} has too little data to split "
            f"({len(keyed)} seconds)"
        )
    eval_rows = sorted(order[:n_eval])
    pool_rows = sorted(order[n_eval:])

    eval_items = [keyed[i][1] for i in eval_rows]
    eval_levels = np.array([int(keyed[i][2]) for i in eval_rows], dtype=np.int64)

    entries = []
    truth = {}
    for pool_id, row in enumerate(pool_rows):
        (session_id, second), item, level = keyed[row]
        entries.append(
            PoolEntry(
                pool_id=pool_id,
                item=item,
                clip_ref=f"{session_id}/{student_id}/{second:05d}",
            )
        )
        truth[pool_id] = level
    return UnlabeledPool(entries), SimulatedOracle(truth), eval_items, eval_levels
