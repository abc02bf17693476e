"""Evaluation: prevalence-weighted AUROC, confusion matrices, LOSO folds.

The headline metric is one-vs-rest AUROC per level, averaged with weights
equal to each level's prevalence in the ground truth.  The evaluation
protocol is leave-one-subject-out: one fold per student, training on
everyone else, never mixing a student's seconds across the split.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence as TSequence

import numpy as np

from .classifiers.base import (
    MIDDLE_FRAME_INDEX,
    N_LEVELS,
    ClassifierSpec,
    TrainedModel,
    train_classifier,
)
from .errors import DataError, UndefinedMetricError
from .fusion import (
    ModalityPair,
    PairedEntry,
    ScoreFusedPair,
    SequencePrediction,
    fuse_features,
    paired_entries,
    predict_sequence,
)
from .ingest import EngagementLevel, LabeledSequenceSet

FEATURE_CHOICES = ("attention", "affect", "feature_fusion", "score_fusion")


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing their average rank."""
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    # Rank block for the k-th distinct value starts after all smaller blocks.
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]]) + 1.0
    avg = starts + (counts - 1) / 2.0
    return avg[inverse]


def binary_auroc(scores: np.ndarray, positives: np.ndarray) -> float:
    """Area under the ROC curve via the rank-sum statistic.

    Equals the probability a random positive outscores a random negative,
    counting ties as one half.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = len(positives) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both positives and negatives")
    ranks = _average_ranks(scores)
    rank_sum = float(ranks[positives].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def weighted_auroc(distributions: np.ndarray, actual: np.ndarray) -> float:
    """Prevalence-weighted mean of the per-level one-vs-rest AUROCs.

    Level k scores each second by its probability of level k; the per-level
    areas are averaged with weights equal to the level prevalences, so the
    weights of the levels actually present sum to one.
    """
    distributions = np.asarray(distributions, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.int64)
    if distributions.ndim != 2 or distributions.shape[1] != N_LEVELS:
        raise DataError(
            f"distributions must be (n, {N_LEVELS}), got {distributions.shape}"
        )
    n = distributions.shape[0]
    if n != len(actual):
        raise DataError(f"{n} distributions vs {len(actual)} labels")
    if n < 2:
        raise UndefinedMetricError("AUROC needs at least 2 samples")
    present = np.unique(actual)
    if len(present) < 2:
        raise UndefinedMetricError(
            "AUROC undefined when one level covers all ground truth"
        )
    total = 0.0
    for lv in present:
        prevalence = float((actual == lv).mean())
        area = binary_auroc(distributions[:, lv], actual == lv)
        total += prevalence * area
    return total


@dataclass
class ConfusionMatrix:
    """Row-normalized confusion over the three levels.

    ``rows[i, j]`` is the fraction of actual level i predicted as level j;
    a row with no actual samples is all zero.  ``priors`` is the prevalence
    of each actual level.
    """

    counts: np.ndarray  # (3, 3) int64
    rows: np.ndarray  # (3, 3) float64
    priors: np.ndarray  # (3,) float64


def confusion_matrix(
    predicted: np.ndarray, actual: np.ndarray
) -> ConfusionMatrix:
    predicted = np.asarray(predicted, dtype=np.int64)
    actual = np.asarray(actual, dtype=np.int64)
    if predicted.shape != actual.shape or predicted.ndim != 1:
        raise DataError("predicted/actual must be equal-length 1-D arrays")
    if len(actual) == 0:
        raise DataError("confusion matrix of an empty set")
    for arr, name in ((predicted, "predicted"), (actual, "actual")):
        if np.any(arr < 0) or np.any(arr >= N_LEVELS):
            raise DataError(f"{name} levels must lie in 0..2")
    counts = np.zeros((N_LEVELS, N_LEVELS), dtype=np.int64)
    np.add.at(counts, (actual, predicted), 1)
    row_sums = counts.sum(axis=1)
    rows = np.zeros((N_LEVELS, N_LEVELS))
    nonzero = row_sums > 0
    rows[nonzero] = counts[nonzero] / row_sums[nonzero, None]
    priors = row_sums / row_sums.sum()
    return ConfusionMatrix(counts=counts, rows=rows, priors=priors)


@dataclass
class FoldResult:
    student_id: str
    auroc: float
    confusion: ConfusionMatrix
    n_test: int
    training_ids_hash: str


@dataclass
class EvaluationReport:
    family: str
    features: str
    folds: list[FoldResult]
    mean_auroc: float
    std_auroc: float
    fingerprint: dict = field(default_factory=dict)


def _training_ids_hash(student_ids: TSequence[str]) -> str:
    joined = "\n".join(sorted(student_ids))
    return hashlib.sha256(joined.encode()).hexdigest()


@dataclass
class _PreparedData:
    """Model inputs for one feature strategy."""

    train_x: np.ndarray | tuple[np.ndarray, np.ndarray]
    train_y: np.ndarray
    test_items: list
    test_y: np.ndarray


def _middle(frames: np.ndarray) -> np.ndarray:
    return frames[MIDDLE_FRAME_INDEX]


def training_arrays(
    dataset: LabeledSequenceSet, features: str, sequence_mode: bool
) -> tuple[np.ndarray | tuple[np.ndarray, np.ndarray], np.ndarray]:
    """Model inputs and labels for one feature strategy.

    Single modalities yield middle frames (or full tensors in sequence
    mode); feature fusion concatenates aligned middle frames (or frame-wise
    for sequences); score fusion returns a tuple of two per-modality inputs.
    """
    if features in ("attention", "affect"):
        sub = dataset.filter(modality=features)
        if sequence_mode:
            return sub.frames_tensor(), sub.labels()
        x = np.stack([_middle(e.sequence.frames) for e in sub.entries])
        return x, sub.labels()
    if features == "feature_fusion":
        pairs = paired_entries(dataset)
        y = np.array([int(p.level) for p in pairs], dtype=np.int64)
        if sequence_mode:
            x = np.stack(
                [
                    fuse_features(p.pair.attention.frames, p.pair.affect.frames)
                    for p in pairs
                ]
            )
            return x, y
        x = np.stack(
            [
                fuse_features(
                    _middle(p.pair.attention.frames),
                    _middle(p.pair.affect.frames),
                )
                for p in pairs
            ]
        )
        return x, y
    if features == "score_fusion":
        pairs = paired_entries(dataset)
        y = np.array([int(p.level) for p in pairs], dtype=np.int64)
        if sequence_mode:
            xa = np.stack([p.pair.attention.frames for p in pairs])
            xb = np.stack([p.pair.affect.frames for p in pairs])
        else:
            xa = np.stack([_middle(p.pair.attention.frames) for p in pairs])
            xb = np.stack([_middle(p.pair.affect.frames) for p in pairs])
        return (xa, xb), y
    raise DataError(
        f"unknown features {features!r}; expected one of {FEATURE_CHOICES}"
    )


def _prepare(
    train_set: LabeledSequenceSet,
    test_set: LabeledSequenceSet,
    features: str,
    sequence_mode: bool,
) -> _PreparedData:
    train_x, train_y = training_arrays(train_set, features, sequence_mode)
    if features in ("attention", "affect"):
        te = test_set.filter(modality=features)
        test_items: list = [e.sequence for e in te.entries]
        test_y = te.labels()
    else:
        te_pairs = paired_entries(test_set)
        test_items = [p.pair for p in te_pairs]
        test_y = np.array([int(p.level) for p in te_pairs], dtype=np.int64)
    return _PreparedData(
        train_x=train_x, train_y=train_y, test_items=test_items, test_y=test_y
    )


def _fit_strategy(
    spec: ClassifierSpec, prepared: _PreparedData, features: str
) -> TrainedModel | ScoreFusedPair:
    if features == "score_fusion":
        xa, xb = prepared.train_x
        return ScoreFusedPair(
            train_classifier(spec, xa, prepared.train_y),
            train_classifier(spec, xb, prepared.train_y),
        )
    return train_classifier(spec, prepared.train_x, prepared.train_y)


def _feature_fused_prediction(
    model: TrainedModel, pair: ModalityPair
) -> SequencePrediction:
    fused_frames = fuse_features(pair.attention.frames, pair.affect.frames)
    merged = type(pair.attention)(
        student_id=pair.attention.student_id,
        session_id=pair.attention.session_id,
        second_index=pair.attention.second_index,
        modality="feature_fusion",
        frames=fused_frames,
    )
    return predict_sequence(model, merged)


def predict_items(
    model: TrainedModel | ScoreFusedPair, items: list, features: str
) -> list[SequencePrediction]:
    """Per-second predictions for evaluation items of one strategy."""
    if features == "feature_fusion":
        return [_feature_fused_prediction(model, pair) for pair in items]
    return [predict_sequence(model, item) for item in items]


def loso_evaluate(
    dataset: LabeledSequenceSet,
    spec: ClassifierSpec,
    features: str = "attention",
    students: TSequence[str] | None = None,
) -> EvaluationReport:
    """Leave-one-subject-out evaluation.

    One fold per student in ``students`` (default: all present), trained on
    the remaining students' data.  Folds whose test student has no usable
    seconds are skipped with a warning.  Each fold asserts that the test
    student never appears in its training half and records a hash of the
    training roster.
    """
    roster = list(students) if students is not None else dataset.students()
    roster = sorted(set(roster))
    if len(roster) < 2:
        raise DataError(f"LOSO needs at least 2 students, got {len(roster)}")
    known = set(dataset.students())
    missing = [s for s in roster if s not in known]
    if missing:
        raise DataError(f"students {missing} have no data")

    sequence_mode = spec.input_mode == "full_sequence"
    folds: list[FoldResult] = []
    for test_student in roster:
        train_students = [s for s in roster if s != test_student]
        train_set = dataset.filter(students=train_students)
        test_set = dataset.filter(students=[test_student])
        if test_student in {e.student_id for e in train_set.entries}:
            raise DataError(
                f"leakage: test student {test_student!r} found in training fold"
            )
        prepared = _prepare(train_set, test_set, features, sequence_mode)
        if len(prepared.test_y) == 0:
            warnings.warn(
                f"skipping fold {test_student!r}: no labeled seconds",
                stacklevel=2,
            )
            continue
        ids_hash = _training_ids_hash(train_students)
        model = _fit_strategy(spec, prepared, features)
        predictions = predict_items(model, prepared.test_items, features)
        dists = np.stack([p.aggregate for p in predictions])
        levels = np.array([int(p.level) for p in predictions], dtype=np.int64)
        folds.append(
            FoldResult(
                student_id=test_student,
                auroc=weighted_auroc(dists, prepared.test_y),
                confusion=confusion_matrix(levels, prepared.test_y),
                n_test=len(prepared.test_y),
                training_ids_hash=ids_hash,
            )
        )
    if not folds:
        raise DataError("every LOSO fold was skipped")
    aurocs = np.array([f.auroc for f in folds])
    report = EvaluationReport(
        family=spec.family,
        features=features,
        folds=folds,
        mean_auroc=float(aurocs.mean()),
        std_auroc=float(aurocs.std(ddof=1)) if len(aurocs) > 1 else 0.0,
        fingerprint={
            "family": spec.family,
            "features": features,
            "seed": spec.seed,
            "students": roster,
        },
    )
    return report


def report_to_dict(report: EvaluationReport) -> dict:
    return {
        "family": report.family,
        "features": report.features,
        "mean_auroc": report.mean_auroc,
        "std_auroc": report.std_auroc,
        "fingerprint": report.fingerprint,
        "folds": [
            {
                "student_id": f.student_id,
                "auroc": f.auroc,
                "n_test": f.n_test,
                "training_ids_hash": f.training_ids_hash,
                "confusion_counts": f.confusion.counts.tolist(),
                "confusion_rows": f.confusion.rows.tolist(),
                "priors": f.confusion.priors.tolist(),
            }
            for f in report.folds
        ],
    }


def save_report(path: str | Path, report: EvaluationReport) -> None:
    Path(path).write_text(json.dumps(report_to_dict(report), indent=2))


def render_report_table(reports: list[EvaluationReport]) -> str:
    """Plain-text table of mean +/- std AUROC per (family, features)."""
    header = f"{'classifier':<16} {'features':<16} {'auroc':<16} folds"
    lines = [header, "-" * len(header)]
    for r in reports:
        lines.append(
            f"{r.family:<16} {r.features:<16} "
            f"{r.mean_auroc:.3f} +/- {r.std_auroc:.3f}   {len(r.folds)}"
        )
    return "\n".join(lines)


def render_confusion(matrix: ConfusionMatrix) -> str:
    """Row-normalized confusion with level priors, as printable text."""
    names = [EngagementLevel(i).label for i in range(N_LEVELS)]
    width = max(len(n) for n in names) + 2
    lines = [
        " " * width
        + "".join(f"{n:>10}" for n in names)
        + f"{'prior':>10}"
    ]
    for i, name in enumerate(names):
        cells = "".join(f"{matrix.rows[i, j]:>10.3f}" for j in range(N_LEVELS))
        lines.append(f"{name:<{width}}{cells}{matrix.priors[i]:>10.3f}")
    return "\n".join(lines)
