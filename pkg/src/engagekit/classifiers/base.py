"""Shared classifier plumbing: specs, reports, the training dispatch."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import (
    DataError,
    ShapeError,
    UnsupportedDistributionError,
    ValueRangeError,
)
from ..pca import PcaModel, pca_transform
from ..tracklets import FPS

N_LEVELS = 3

# Frame-mode classifiers see one frame per second: the middle one.
MIDDLE_FRAME_INDEX = FPS // 2

FAMILIES = ("svm_linear", "svm_rbf", "random_forest", "mlp", "lstm")


def validate_distribution(p: np.ndarray) -> np.ndarray:
    """Check that p is a probability distribution over the three levels."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (N_LEVELS,):
        raise ShapeError(f"distribution must have shape (3,), got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueRangeError("distribution has non-finite entries")
    if np.any(p < -1e-12) or np.any(p > 1.0 + 1e-12):
        raise ValueRangeError(f"distribution entries outside [0, 1]: {p}")
    if abs(float(p.sum()) - 1.0) > 1e-9:
        raise ValueRangeError(f"distribution sums to {p.sum()}, not 1")
    return p


@dataclass(frozen=True)
class ClassifierSpec:
    """Family choice plus hyperparameters; unused fields are ignored.

    ``gamma=None`` means the RBF width defaults at fit time to
    1 / (n_features * mean per-feature variance) of the training matrix.
    """

    family: str
    seed: int = 0
    # SVM
    c: float = 1.0
    gamma: float | None = None
    pca_target: float = 0.99
    calibration_folds: int = 5
    kkt_tolerance: float = 1e-3
    # Random forest
    trees: int = 100
    # MLP / LSTM
    hidden_size: int = 128
    fc_size: int = 64
    learning_rate: float = 0.001
    mlp_batch_size: int = 256
    lstm_batch_size: int = 64
    max_epochs: int = 200
    lstm_epochs: int = 5
    patience: int = 5
    validation_fraction: float = 0.1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DataError(
                f"unknown classifier family {self.family!r}; "
                f"expected one of {FAMILIES}"
            )
        if self.seed < 0:
            raise DataError("seed must be non-negative")

    @property
    def input_mode(self) -> str:
        """'full_sequence' for the LSTM, 'middle_frame' for the rest."""
        return "full_sequence" if self.family == "lstm" else "middle_frame"


@dataclass
class TrainingReport:
    """What happened during one fit; equal reports mean identical runs."""

    family: str
    seed: int
    n_samples: int
    n_features: int
    loss_curve: list[float] = field(default_factory=list)
    validation_curve: list[float] = field(default_factory=list)
    epochs_run: int = 0
    best_epoch: int = 0
    details: dict[str, Any] = field(default_factory=dict)


class TrainedModel:
    """Base class for fitted classifiers.

    Subclasses implement ``_predict_batch`` on their native input.  A PCA
    model attached by the trainer is applied transparently before
    prediction (frame-mode families only).
    """

    family: str
    spec: ClassifierSpec
    report: TrainingReport
    pca: PcaModel | None = None

    @property
    def input_mode(self) -> str:
        return self.spec.input_mode

    def _predict_batch(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """Distributions for a batch of inputs.

        Frame-mode models take (n, d); the LSTM takes (n, 24, d).
        """
        x = np.asarray(x, dtype=np.float64)
        expected_ndim = 3 if self.input_mode == "full_sequence" else 2
        if x.ndim != expected_ndim:
            raise ShapeError(
                f"{self.family} batch input must be {expected_ndim}-D, "
                f"got shape {x.shape}"
            )
        if self.pca is not None:
            x = pca_transform(self.pca, x)
        return self._predict_batch(x)

    def predict_distribution(self, x: np.ndarray) -> np.ndarray:
        """Distribution for a single input (frame vector or sequence)."""
        x = np.asarray(x, dtype=np.float64)
        if self.input_mode == "full_sequence":
            if x.ndim != 2 or x.shape[0] != FPS:
                raise ShapeError(
                    f"lstm input must be a ({FPS}, d) sequence, got {x.shape}"
                )
            return self.predict_proba(x[None])[0]
        if x.ndim != 1:
            raise ShapeError(
                f"{self.family} input must be a single frame vector, "
                f"got shape {x.shape}"
            )
        return self.predict_proba(x[None])[0]


def predict_distribution(model: TrainedModel, x: np.ndarray) -> np.ndarray:
    """Module-level alias validating input mode before delegating."""
    out = model.predict_distribution(x)
    return validate_distribution(out)


def _check_training_labels(y: np.ndarray, require_all_levels: bool) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got shape {y.shape}")
    y = y.astype(np.int64)
    if np.any(y < 0) or np.any(y >= N_LEVELS):
        raise ValueRangeError("labels must lie in {0, 1, 2}")
    if require_all_levels:
        present = np.unique(y)
        if len(present) < N_LEVELS:
            missing = sorted(set(range(N_LEVELS)) - set(present.tolist()))
            raise UnsupportedDistributionError(
                f"training labels miss levels {missing}"
            )
    return y


def train_classifier(
    spec: ClassifierSpec,
    x: np.ndarray,
    y: np.ndarray,
    allow_missing_levels: bool = False,
) -> TrainedModel:
    """Fit one classifier.

    Frame-mode families expect x of shape (n, d); the LSTM expects
    (n, 24, d).  SVM variants fit a PCA on x first and train in the reduced
    space; the other families consume raw features.  With
    ``allow_missing_levels`` the SVM tolerates levels absent from y (used
    when retraining on small personal label sets).
    """
    from . import forest, lstm, mlp, svm
    from ..pca import fit_pca

    x = np.asarray(x, dtype=np.float64)
    y = _check_training_labels(y, require_all_levels=not allow_missing_levels)
    if x.shape[0] != y.shape[0]:
        raise ShapeError(
            f"{x.shape[0]} inputs vs {y.shape[0]} labels"
        )
    if x.shape[0] == 0:
        raise DataError("empty training set")

    if spec.family == "lstm":
        if x.ndim != 3 or x.shape[1] != FPS:
            raise ShapeError(
                f"lstm training input must be (n, {FPS}, d), got {x.shape}"
            )
        return lstm.fit_lstm(x, y, spec)

    if x.ndim != 2:
        raise ShapeError(
            f"{spec.family} training input must be (n, d), got {x.shape}"
        )
    if spec.family in ("svm_linear", "svm_rbf"):
        pca_model = fit_pca(x, spec.pca_target)
        reduced = pca_transform(pca_model, x)
        model = svm.fit_svm(
            reduced,
            y,
            kernel="linear" if spec.family == "svm_linear" else "rbf",
            spec=spec,
            allow_missing_levels=allow_missing_levels,
        )
        model.pca = pca_model
        return model
    if spec.family == "random_forest":
        return forest.fit_random_forest(x, y, spec)
    if spec.family == "mlp":
        return mlp.fit_mlp(x, y, spec)
    raise DataError(f"unknown family {spec.family!r}")
