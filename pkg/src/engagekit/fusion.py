"""Modality fusion and per-second prediction.

Two fusion routes: feature-level (concatenate the two modality vectors
before training one model) and score-level (train one model per modality and
average their probability outputs).  Frame-mode models predict all 24 frames
of a second and majority-vote the per-frame levels; the LSTM predicts the
second in one shot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifiers.base import N_LEVELS, TrainedModel, validate_distribution
from .errors import DataError, DimensionMismatchError, ShapeError
from .ingest import EngagementLevel, LabeledSequenceSet
from .tracklets import FPS, Sequence


@dataclass(frozen=True)
class ModalityPair:
    """The two aligned sequences of one student-second."""

    attention: Sequence
    affect: Sequence

    def __post_init__(self):
        a, b = self.attention, self.affect
        if (a.student_id, a.session_id, a.second_index) != (
            b.student_id,
            b.session_id,
            b.second_index,
        ):
            raise DataError(
                "modality pair mixes different student-seconds: "
                f"{(a.student_id, a.session_id, a.second_index)} vs "
                f"{(b.student_id, b.session_id, b.second_index)}"
            )


@dataclass(frozen=True)
class PairedEntry:
    pair: ModalityPair
    level: EngagementLevel


def paired_entries(
    dataset: LabeledSequenceSet,
    modalities: tuple[str, str] = ("attention", "affect"),
) -> list[PairedEntry]:
    """Join a two-modality dataset on (student, session, second).

    Seconds present in only one modality are dropped; labels of a joined
    pair always agree because both came from the same rating.
    """
    first, second = modalities
    by_key: dict[tuple[str, str, int], dict] = {}
    for e in dataset.entries:
        if e.modality not in modalities:
            continue
        key = (e.student_id, e.session_id, e.second_index)
        by_key.setdefault(key, {})[e.modality] = e
    out = []
    for key in sorted(by_key):
        slot = by_key[key]
        if first in slot and second in slot:
            out.append(
                PairedEntry(
                    pair=ModalityPair(
                        attention=slot[first].sequence,
                        affect=slot[second].sequence,
                    ),
                    level=slot[first].level,
                )
            )
    return out


def fuse_features(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Feature-level fusion: plain concatenation along the last axis."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != b.ndim:
        raise ShapeError(f"rank mismatch: {a.shape} vs {b.shape}")
    if a.ndim >= 2 and a.shape[:-1] != b.shape[:-1]:
        raise DimensionMismatchError(
            f"leading shapes differ: {a.shape} vs {b.shape}"
        )
    return np.concatenate([a, b], axis=-1)


def fuse_scores(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Score-level fusion: unweighted elementwise mean of distributions."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeError(f"distribution shapes differ: {p.shape} vs {q.shape}")
    if p.ndim == 1:
        validate_distribution(p)
        validate_distribution(q)
    else:
        for row_p, row_q in zip(p, q):
            validate_distribution(row_p)
            validate_distribution(row_q)
    return (p + q) / 2.0


def majority_vote(
    levels: np.ndarray, distributions: np.ndarray
) -> EngagementLevel:
    """Majority vote over 24 per-frame levels.

    Ties break toward the tied level with the larger probability mass summed
    over the 24 frame distributions; a residual tie goes to the lower level
    index.
    """
    levels = np.asarray(levels, dtype=np.int64)
    distributions = np.asarray(distributions, dtype=np.float64)
    if levels.shape != (FPS,):
        raise ShapeError(f"expected {FPS} frame levels, got shape {levels.shape}")
    if distributions.shape != (FPS, N_LEVELS):
        raise ShapeError(
            f"expected ({FPS}, {N_LEVELS}) frame distributions, got "
            f"{distributions.shape}"
        )
    if np.any(levels < 0) or np.any(levels >= N_LEVELS):
        raise DataError("frame levels must lie in {0, 1, 2}")
    if not np.all(np.isfinite(distributions)):
        raise DataError("frame distributions contain non-finite values")
    counts = np.bincount(levels, minlength=N_LEVELS)
    top = counts.max()
    tied = np.flatnonzero(counts == top)
    if len(tied) == 1:
        return EngagementLevel(int(tied[0]))
    sums = distributions.sum(axis=0)[tied]
    return EngagementLevel(int(tied[np.argmax(sums)]))


@dataclass
class SequencePrediction:
    """One second's prediction."""

    student_id: str
    session_id: str
    second_index: int
    level: EngagementLevel
    frame_distributions: np.ndarray | None  # (24, 3) or None for the LSTM
    aggregate: np.ndarray  # (3,)


class ScoreFusedPair:
    """Two per-modality models whose probability outputs are averaged.

    Both members must share the input mode; mixing a frame-mode model with
    an LSTM is not supported.
    """

    def __init__(self, attention_model: TrainedModel, affect_model: TrainedModel):
        if attention_model.input_mode != affect_model.input_mode:
            raise DataError(
                "score fusion requires members with the same input mode, got "
                f"{attention_model.input_mode} vs {affect_model.input_mode}"
            )
        self.attention_model = attention_model
        self.affect_model = affect_model

    @property
    def input_mode(self) -> str:
        return self.attention_model.input_mode

    def predict_distribution(self, pair_input: tuple[np.ndarray, np.ndarray]):
        a, b = pair_input
        return fuse_scores(
            self.attention_model.predict_distribution(a),
            self.affect_model.predict_distribution(b),
        )


def _frame_mode_prediction(
    distributions: np.ndarray,
    student_id: str,
    session_id: str,
    second_index: int,
) -> SequencePrediction:
    frame_levels = distributions.argmax(axis=1)
    level = majority_vote(frame_levels, distributions)
    return SequencePrediction(
        student_id=student_id,
        session_id=session_id,
        second_index=second_index,
        level=level,
        frame_distributions=distributions,
        aggregate=distributions.mean(axis=0),
    )


def predict_sequence(
    model: TrainedModel | ScoreFusedPair,
    item: Sequence | ModalityPair,
) -> SequencePrediction:
    """Predict one second.

    Frame-mode models classify each of the 24 frames and majority-vote;
    the LSTM consumes the whole sequence and votes nothing.  With a
    :class:`ScoreFusedPair` and a :class:`ModalityPair`, per-frame (or
    per-sequence) distributions are averaged before voting.
    """
    if isinstance(item, ModalityPair):
        if not isinstance(model, ScoreFusedPair):
            raise DataError(
                "a modality pair needs a score-fused model pair"
            )
        a, b = item.attention, item.affect
        if model.input_mode == "full_sequence":
            fused = fuse_scores(
                model.attention_model.predict_distribution(a.frames),
                model.affect_model.predict_distribution(b.frames),
            )
            return SequencePrediction(
                student_id=a.student_id,
                session_id=a.session_id,
                second_index=a.second_index,
                level=EngagementLevel(int(np.argmax(fused))),
                frame_distributions=None,
                aggregate=fused,
            )
        fused = fuse_scores(
            model.attention_model.predict_proba(a.frames),
            model.affect_model.predict_proba(b.frames),
        )
        return _frame_mode_prediction(
            fused, a.student_id, a.session_id, a.second_index
        )

    if isinstance(model, ScoreFusedPair):
        raise DataError("a score-fused model pair needs a modality pair")
    seq = item
    if model.input_mode == "full_sequence":
        p = model.predict_distribution(seq.frames)
        return SequencePrediction(
            student_id=seq.student_id,
            session_id=seq.session_id,
            second_index=seq.second_index,
            level=EngagementLevel(int(np.argmax(p))),
            frame_distributions=None,
            aggregate=p,
        )
    distributions = model.predict_proba(seq.frames)
    return _frame_mode_prediction(
        distributions, seq.student_id, seq.session_id, seq.second_index
    )


def export_predictions(path, predictions: list[SequencePrediction]) -> None:
    """Write predictions as CSV with per-level probabilities."""
    import csv
    from pathlib import Path

    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [
                "student_id",
                "session_id",
                "second",
                "level",
                "p_low",
                "p_medium",
                "p_high",
            ]
        )
        for p in predictions:
            writer.writerow(
                [
                    p.student_id,
                    p.session_id,
                    p.second_index,
                    p.level.label,
                    repr(float(p.aggregate[0])),
                    repr(float(p.aggregate[1])),
                    repr(float(p.aggregate[2])),
                ]
            )
