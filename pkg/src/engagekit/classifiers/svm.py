"""Support vector machines trained by sequential minimal optimization.

One soft-margin binary machine per engagement level (one-vs-rest), solved
with Platt's SMO working-pair heuristics, then calibrated into probabilities
with Platt scaling fitted on cross-validated decision values (Lin, Weng and
Keerthi's damped Newton variant).  Probabilities across the three levels are
normalized to sum to one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import (
    DataError,
    DegenerateInputError,
    ShapeError,
    UnsupportedDistributionError,
)
from .base import (
    N_LEVELS,
    ClassifierSpec,
    TrainedModel,
    TrainingReport,
    _check_training_labels,
)

KERNELS = ("linear", "rbf")

_ALPHA_EPS = 1e-10


def kernel_matrix(
    a: np.ndarray, b: np.ndarray, kernel: str, gamma: float | None = None
) -> np.ndarray:
    """Gram matrix between row sets a (m, d) and b (n, d)."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"kernel operands differ in width: {a.shape} vs {b.shape}")
    if kernel == "linear":
        return a @ b.T
    if kernel == "rbf":
        if gamma is None or gamma <= 0:
            raise DataError(f"rbf kernel needs gamma > 0, got {gamma}")
        sq = (
            (a**2).sum(axis=1)[:, None]
            + (b**2).sum(axis=1)[None, :]
            - 2.0 * (a @ b.T)
        )
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-gamma * sq)
    raise DataError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")


def default_gamma(x: np.ndarray) -> float:
    """RBF width 1 / (n_features * mean per-feature variance)."""
    x = np.asarray(x, dtype=np.float64)
    mean_var = float(x.var(axis=0).mean())
    if mean_var <= 0.0:
        raise DegenerateInputError("cannot derive gamma: zero feature variance")
    return 1.0 / (x.shape[1] * mean_var)


def dual_objective(alpha: np.ndarray, y: np.ndarray, k: np.ndarray) -> float:
    """Soft-margin dual objective sum(a) - 1/2 a' (yy' * K) a (maximized)."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ k @ ay)


def kkt_violations(
    alpha: np.ndarray, y: np.ndarray, decisions: np.ndarray, c: float
) -> np.ndarray:
    """Per-point Karush-Kuhn-Tucker residuals of a candidate solution.

    Points at the lower bound must satisfy y*f >= 1, points at the upper
    bound y*f <= 1 and interior points y*f == 1; the residual is how far the
    margin strays on the wrong side.
    """
    margin = y * decisions
    lower = alpha <= _ALPHA_EPS
    upper = alpha >= c - _ALPHA_EPS
    viol = np.abs(margin - 1.0)
    viol[lower] = np.maximum(0.0, 1.0 - margin[lower])
    viol[upper] = np.maximum(0.0, margin[upper] - 1.0)
    return viol


class BinarySvm:
    """One binary soft-margin machine solved by SMO.

    Follows Platt's two-loop structure: an outer sweep alternating between
    all points and the non-bound subset, an inner working-pair choice by
    maximal error difference with randomized fallbacks.  The error cache is
    updated incrementally, so the stopping state satisfies the KKT
    conditions within ``tol``.
    """

    def __init__(
        self,
        kernel: str,
        c: float,
        gamma: float | None = None,
        tol: float = 1e-3,
        seed: int = 0,
    ):
        if c <= 0:
            raise DataError(f"C must be positive, got {c}")
        if kernel not in KERNELS:
            raise DataError(f"unknown kernel {kernel!r}")
        self.kernel = kernel
        self.c = float(c)
        self.gamma = gamma
        self.tol = float(tol)
        self.seed = int(seed)
        self.alpha: np.ndarray | None = None
        self.b = 0.0
        self.converged = True
        self.steps = 0
        self._sv_x: np.ndarray | None = None
        self._sv_coef: np.ndarray | None = None

    def fit(self, x: np.ndarray, y: np.ndarray) -> "BinarySvm":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        n = x.shape[0]
        if set(np.unique(y)) - {-1.0, 1.0}:
            raise DataError("binary labels must be -1/+1")
        if len(np.unique(y)) < 2:
            raise DegenerateInputError("binary fit needs both classes")
        if self.kernel == "rbf" and self.gamma is None:
            self.gamma = default_gamma(x)

        k = kernel_matrix(x, x, self.kernel, self.gamma)
        alpha = np.zeros(n)
        b = 0.0
        # errors[i] = f(x_i) - y_i, kept exact by incremental updates
        errors = -y.copy()
        rng = np.random.default_rng(self.seed)
        c, tol = self.c, self.tol
        steps = 0
        max_steps = 200_000

        def take_step(i1: int, i2: int) -> bool:
            nonlocal b, errors, steps
            if i1 == i2:
                return False
            a1_old, a2_old = alpha[i1], alpha[i2]
            y1, y2 = y[i1], y[i2]
            e1, e2 = errors[i1], errors[i2]
            s = y1 * y2
            if s > 0:
                lo = max(0.0, a1_old + a2_old - c)
                hi = min(c, a1_old + a2_old)
            else:
                lo = max(0.0, a2_old - a1_old)
                hi = min(c, c + a2_old - a1_old)
            if lo >= hi:
                return False
            k11, k12, k22 = k[i1, i1], k[i1, i2], k[i2, i2]
            eta = k11 + k22 - 2.0 * k12
            if eta > 1e-15:
                a2 = a2_old + y2 * (e1 - e2) / eta
                a2 = min(max(a2, lo), hi)
            else:
                # Flat or concave direction: evaluate the pair objective at
                # both clip ends and move to the smaller one.
                v1 = (e1 + y1 - b) - a1_old * y1 * k11 - a2_old * y2 * k12
                v2 = (e2 + y2 - b) - a1_old * y1 * k12 - a2_old * y2 * k22

                def pair_obj(a2c: float) -> float:
                    a1c = a1_old + s * (a2_old - a2c)
                    return (
                        0.5 * k11 * a1c * a1c
                        + 0.5 * k22 * a2c * a2c
                        + s * k12 * a1c * a2c
                        + y1 * a1c * v1
                        + y2 * a2c * v2
                        - a1c
                        - a2c
                    )

                lobj, hobj = pair_obj(lo), pair_obj(hi)
                if lobj < hobj - 1e-12:
                    a2 = lo
                elif lobj > hobj + 1e-12:
                    a2 = hi
                else:
                    a2 = a2_old
            if abs(a2 - a2_old) < 1e-10 * (a2 + a2_old + 1e-10):
                return False
            a1 = a1_old + s * (a2_old - a2)
            da1, da2 = a1 - a1_old, a2 - a2_old

            if 0.0 < a1 < c:
                b_new = b - e1 - y1 * da1 * k11 - y2 * da2 * k12
            elif 0.0 < a2 < c:
                b_new = b - e2 - y1 * da1 * k12 - y2 * da2 * k22
            else:
                b1 = b - e1 - y1 * da1 * k11 - y2 * da2 * k12
                b2 = b - e2 - y1 * da1 * k12 - y2 * da2 * k22
                b_new = 0.5 * (b1 + b2)

            alpha[i1], alpha[i2] = a1, a2
            errors += y1 * da1 * k[i1] + y2 * da2 * k[i2] + (b_new - b)
            b = b_new
            steps += 1
            return True

        def examine(i2: int) -> bool:
            y2, a2 = y[i2], alpha[i2]
            e2 = errors[i2]
            r2 = e2 * y2
            if not (
                (r2 < -tol and a2 < c - _ALPHA_EPS)
                or (r2 > tol and a2 > _ALPHA_EPS)
            ):
                return False
            non_bound = np.flatnonzero(
                (alpha > _ALPHA_EPS) & (alpha < c - _ALPHA_EPS)
            )
            if len(non_bound) > 1:
                i1 = int(non_bound[np.argmax(np.abs(errors[non_bound] - e2))])
                if take_step(i1, i2):
                    return True
            if len(non_bound):
                start = rng.integers(len(non_bound))
                for j in np.roll(non_bound, -start):
                    if take_step(int(j), i2):
                        return True
            start = rng.integers(n)
            for j in np.roll(np.arange(n), -start):
                if take_step(int(j), i2):
                    return True
            return False

        examine_all = True
        changed = 0
        self.converged = True
        while changed > 0 or examine_all:
            changed = 0
            targets = (
                range(n)
                if examine_all
                else np.flatnonzero(
                    (alpha > _ALPHA_EPS) & (alpha < c - _ALPHA_EPS)
                )
            )
            for i2 in targets:
                changed += examine(int(i2))
            if examine_all:
                examine_all = False
            elif changed == 0:
                examine_all = True
            if steps > max_steps:
                self.converged = False
                break

        self.alpha = alpha
        self.b = float(b)
        self.steps = steps
        sv = alpha > _ALPHA_EPS
        self._sv_x = x[sv].copy()
        self._sv_coef = (alpha[sv] * y[sv]).copy()
        return self

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        if self._sv_x is None:
            raise DataError("decision_function before fit")
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if len(self._sv_coef) == 0:
            return np.full(x.shape[0], self.b)
        k = kernel_matrix(x, self._sv_x, self.kernel, self.gamma)
        return k @ self._sv_coef + self.b


@dataclass
class PlattSigmoid:
    """Calibration map p = 1 / (1 + exp(a*f + b)).

    ``folds`` records how the decision values it was fitted on were produced
    (out-of-fold values from that many cross-validation folds).
    """

    a: float
    b: float
    folds: int = 0

    def apply(self, f: np.ndarray) -> np.ndarray:
        z = self.a * np.asarray(f, dtype=np.float64) + self.b
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = np.exp(-z[pos]) / (1.0 + np.exp(-z[pos]))
        out[~pos] = 1.0 / (1.0 + np.exp(z[~pos]))
        return out


def platt_calibrate(
    decision_values: np.ndarray, y: np.ndarray, folds: int = 5
) -> PlattSigmoid:
    """Fit the two-parameter sigmoid by damped Newton iteration.

    ``y`` holds binary labels (+1/-1 or 1/0).  Targets are the regularized
    frequencies (n+ + 1)/(n+ + 2) and 1/(n- + 2) rather than hard 0/1.
    ``folds`` documents the cross-validation arrangement that produced
    ``decision_values`` (the caller is responsible for holding values out);
    it must be at least 2 and is recorded on the result.
    """
    if folds < 2:
        raise DataError(f"calibration folds must be >= 2, got {folds}")
    f = np.asarray(decision_values, dtype=np.float64).ravel()
    y = np.asarray(y).ravel()
    if f.shape != y.shape:
        raise ShapeError("decision values and labels differ in length")
    pos = y > 0
    prior1 = int(pos.sum())
    prior0 = len(y) - prior1
    if prior1 == 0 or prior0 == 0:
        raise DegenerateInputError("calibration needs both classes")

    hi = (prior1 + 1.0) / (prior1 + 2.0)
    lo = 1.0 / (prior0 + 2.0)
    t = np.where(pos, hi, lo)

    def objective(a: float, b: float) -> float:
        z = a * f + b
        zp = z >= 0
        val = np.empty_like(z)
        val[zp] = t[zp] * z[zp] + np.log1p(np.exp(-z[zp]))
        val[~zp] = (t[~zp] - 1.0) * z[~zp] + np.log1p(np.exp(z[~zp]))
        return float(val.sum())

    a = 0.0
    b = float(np.log((prior0 + 1.0) / (prior1 + 1.0)))
    sigma = 1e-12
    fval = objective(a, b)
    for _ in range(100):
        z = a * f + b
        zp = z >= 0
        p = np.empty_like(z)
        p[zp] = np.exp(-z[zp]) / (1.0 + np.exp(-z[zp]))
        p[~zp] = 1.0 / (1.0 + np.exp(z[~zp]))
        q = 1.0 - p
        d1 = t - p
        g1 = float((f * d1).sum())
        g2 = float(d1.sum())
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        pq = p * q
        h11 = float((f * f * pq).sum()) + sigma
        h22 = float(pq.sum()) + sigma
        h21 = float((f * pq).sum())
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db
        step = 1.0
        while step >= 1e-10:
            new_a, new_b = a + step * da, b + step * db
            new_f = objective(new_a, new_b)
            if new_f < fval + 1e-4 * step * gd:
                a, b, fval = new_a, new_b, new_f
                break
            step /= 2.0
        else:
            break
    return PlattSigmoid(a=float(a), b=float(b), folds=int(folds))


def cross_validated_decision_values(
    x: np.ndarray,
    yb: np.ndarray,
    kernel: str,
    c: float,
    gamma: float | None,
    tol: float,
    folds: int,
    seed: int,
) -> np.ndarray:
    """Out-of-fold decision values from stratified K-fold refits."""
    n = len(yb)
    rng = np.random.default_rng(seed)
    fold_of = np.empty(n, dtype=np.int64)
    for cls in (-1.0, 1.0):
        idx = np.flatnonzero(yb == cls)
        rng.shuffle(idx)
        fold_of[idx] = np.arange(len(idx)) % folds
    out = np.empty(n)
    for f in range(folds):
        train = fold_of != f
        machine = BinarySvm(kernel, c, gamma, tol, seed=seed + f + 1)
        machine.fit(x[train], yb[train])
        out[~train] = machine.decision_function(x[~train])
    return out


@dataclass
class _LevelMachine:
    machine: BinarySvm | None
    sigmoid: PlattSigmoid | None
    constant: float | None = None

    def raw_probability(self, x: np.ndarray) -> np.ndarray:
        if self.constant is not None:
            return np.full(x.shape[0], self.constant)
        assert self.machine is not None
        f = self.machine.decision_function(x)
        if self.sigmoid is not None:
            return self.sigmoid.apply(f)
        # Uncalibrated fallback for levels too thin to calibrate.
        return PlattSigmoid(a=-1.0, b=0.0).apply(f)


class SvmModel(TrainedModel):
    """One-vs-rest SVM with per-level Platt calibration."""

    def __init__(
        self,
        spec: ClassifierSpec,
        levels: dict[int, _LevelMachine],
        report: TrainingReport,
    ):
        self.family = spec.family
        self.spec = spec
        self.levels = levels
        self.report = report
        self.pca = None

    def _predict_batch(self, x: np.ndarray) -> np.ndarray:
        raw = np.stack(
            [self.levels[lv].raw_probability(x) for lv in range(N_LEVELS)],
            axis=1,
        )
        sums = raw.sum(axis=1, keepdims=True)
        flat = (sums.ravel() <= 0.0)
        if flat.any():
            raw[flat] = 1.0 / N_LEVELS
            sums[flat] = 1.0
        return raw / sums


def fit_svm(
    x: np.ndarray,
    y: np.ndarray,
    kernel: str,
    spec: ClassifierSpec | None = None,
    allow_missing_levels: bool = False,
) -> SvmModel:
    """Fit the one-vs-rest machine battery with probability calibration.

    Expects features already reduced (the training dispatch applies PCA
    before calling this).  Each represented level needs at least two
    samples; with ``allow_missing_levels`` thin or absent levels degrade to
    uncalibrated or constant probabilities instead of failing.
    """
    if spec is None:
        spec = ClassifierSpec(
            family="svm_linear" if kernel == "linear" else "svm_rbf"
        )
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"fit_svm expects (n, d) features, got {x.shape}")
    y = _check_training_labels(y, require_all_levels=not allow_missing_levels)
    n = x.shape[0]
    if n != len(y):
        raise ShapeError(f"{n} inputs vs {len(y)} labels")

    gamma = spec.gamma
    if kernel == "rbf" and gamma is None:
        gamma = default_gamma(x)

    counts = np.bincount(y, minlength=N_LEVELS)
    if not allow_missing_levels and np.any((counts > 0) & (counts < 2)):
        thin = [int(lv) for lv in range(N_LEVELS) if 0 < counts[lv] < 2]
        raise UnsupportedDistributionError(
            f"levels {thin} have fewer than 2 training samples"
        )

    seed_seqs = np.random.SeedSequence(spec.seed).spawn(N_LEVELS)
    levels: dict[int, _LevelMachine] = {}
    details: dict = {"gamma": gamma, "kernel": kernel, "per_level": {}}
    for lv in range(N_LEVELS):
        lv_seed = int(seed_seqs[lv].generate_state(1)[0] % (2**31))
        pos = int(counts[lv])
        neg = n - pos
        if pos == 0 or neg == 0:
            levels[lv] = _LevelMachine(
                machine=None, sigmoid=None, constant=1.0 if pos else 0.0
            )
            details["per_level"][str(lv)] = {"constant": levels[lv].constant}
            continue
        yb = np.where(y == lv, 1.0, -1.0)
        machine = BinarySvm(
            kernel, spec.c, gamma, spec.kkt_tolerance, seed=lv_seed
        )
        machine.fit(x, yb)
        sigmoid = None
        folds = min(spec.calibration_folds, pos, neg)
        if folds >= 2:
            oof = cross_validated_decision_values(
                x,
                yb,
                kernel,
                spec.c,
                gamma,
                spec.kkt_tolerance,
                folds,
                seed=lv_seed,
            )
            sigmoid = platt_calibrate(oof, yb, folds=folds)
        elif not allow_missing_levels:
            raise UnsupportedDistributionError(
                f"level {lv} too thin to calibrate ({pos} vs {neg})"
            )
        levels[lv] = _LevelMachine(machine=machine, sigmoid=sigmoid)
        # string keys so the report survives a JSON round trip unchanged
        details["per_level"][str(lv)] = {
            "support_vectors": int((machine.alpha > _ALPHA_EPS).sum()),
            "smo_steps": machine.steps,
            "converged": machine.converged,
            "calibration_folds": folds if sigmoid else 0,
        }

    report = TrainingReport(
        family=spec.family,
        seed=spec.seed,
        n_samples=n,
        n_features=x.shape[1],
        details=details,
    )
    return SvmModel(spec=spec, levels=levels, report=report)
