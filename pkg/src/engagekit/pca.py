"""Principal component analysis retaining a target fraction of variance.

Fit on training data only; the same model then transforms validation and
test vectors.  Components use the 1/(n-1) sample covariance and a sign
convention (largest-magnitude coordinate positive) so that repeated fits are
bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    DegenerateInputError,
    DimensionMismatchError,
    ParseError,
)


@dataclass
class PcaModel:
    """A fitted linear projection.

    ``components`` has shape (k, d), rows orthonormal, ordered by decreasing
    ``explained_variance``.  ``retained_fraction`` is the fraction of total
    sample variance the k components carry.
    """

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    retained_fraction: float
    target_fraction: float

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def input_dim(self) -> int:
        return self.components.shape[1]


def fit_pca(x: np.ndarray, target_fraction: float = 0.99) -> PcaModel:
    """Fit a PCA keeping the smallest k whose variance share >= target.

    Uses the SVD of the centered data matrix; eigenvalues of the 1/(n-1)
    covariance are the squared singular values over (n-1).  Each component's
    sign is fixed so its largest-magnitude coordinate is positive.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"fit_pca expects a 2-D matrix, got shape {x.shape}")
    n, d = x.shape
    if n < 2:
        raise DegenerateInputError(f"fit_pca needs at least 2 rows, got {n}")
    if not np.all(np.isfinite(x)):
        raise DataError("fit_pca input contains non-finite values")
    if not 0.0 < target_fraction <= 1.0:
        raise DataError(f"target_fraction {target_fraction} outside (0, 1]")

    mean = x.mean(axis=0)
    centered = x - mean
    # Columns of vt are eigenvectors of the sample covariance; s**2/(n-1)
    # are its eigenvalues, already sorted descending by the SVD.
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    eigenvalues = (s**2) / (n - 1)
    total = float(eigenvalues.sum())
    if total <= 0.0:
        raise DegenerateInputError("fit_pca input has zero total variance")

    cumulative = np.cumsum(eigenvalues) / total
    k = int(np.searchsorted(cumulative, target_fraction - 1e-12) + 1)
    k = min(k, len(eigenvalues))

    components = vt[:k].copy()
    for row in components:
        peak = np.argmax(np.abs(row))
        if row[peak] < 0:
            row *= -1.0
    return PcaModel(
        mean=mean,
        components=components,
        explained_variance=eigenvalues[:k].copy(),
        retained_fraction=float(cumulative[k - 1]),
        target_fraction=float(target_fraction),
    )


def pca_transform(model: PcaModel, x: np.ndarray) -> np.ndarray:
    """Project vectors onto the fitted components.

    Accepts a single (d,) vector or an (n, d) matrix and returns (k,) or
    (n, k) accordingly.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise DimensionMismatchError(
            f"pca_transform expects width {model.input_dim}, got {x.shape}"
        )
    z = (x - model.mean) @ model.components.T
    return z[0] if single else z


def pca_inverse_transform(model: PcaModel, z: np.ndarray) -> np.ndarray:
    """Map projected vectors back to the original space."""
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    if single:
        z = z[None, :]
    if z.ndim != 2 or z.shape[1] != model.n_components:
        raise DimensionMismatchError(
            f"pca_inverse_transform expects width {model.n_components}, "
            f"got {z.shape}"
        )
    x = z @ model.components + model.mean
    return x[0] if single else x


def pca_to_dict(model: PcaModel) -> dict:
    return {
        "mean": model.mean.tolist(),
        "components": model.components.tolist(),
        "explained_variance": model.explained_variance.tolist(),
        "retained_fraction": model.retained_fraction,
        "target_fraction": model.target_fraction,
    }


def pca_from_dict(raw: dict) -> PcaModel:
    try:
        return PcaModel(
            mean=np.asarray(raw["mean"], dtype=np.float64),
            components=np.asarray(raw["components"], dtype=np.float64),
            explained_variance=np.asarray(
                raw["explained_variance"], dtype=np.float64
            ),
            retained_fraction=float(raw["retained_fraction"]),
            target_fraction=float(raw["target_fraction"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad PCA record: {exc}") from exc


def save_pca(path: str | Path, model: PcaModel) -> None:
    Path(path).write_text(json.dumps(pca_to_dict(model)))


def load_pca(path: str | Path) -> PcaModel:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    return pca_from_dict(raw)
