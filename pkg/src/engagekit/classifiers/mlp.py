"""Single-hidden-layer perceptron trained by minibatch SGD.

Architecture d -> hidden (ReLU) -> 3 with softmax cross-entropy loss.
Training holds out a random validation slice and stops early when the
validation loss fails to improve for ``patience`` consecutive epochs,
restoring the best weights seen.
"""

from __future__ import annotations

import numpy as np

from ..errors import DataError, DivergenceError, ShapeError
from .base import (
    N_LEVELS,
    ClassifierSpec,
    TrainedModel,
    TrainingReport,
    _check_training_labels,
)


def softmax_cross_entropy(
    logits: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean loss over the batch and its gradient wrt the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    n = len(y)
    log_probs = shifted - np.log(exp.sum(axis=1, keepdims=True))
    loss = -float(log_probs[np.arange(n), y].mean())
    grad = probs.copy()
    grad[np.arange(n), y] -= 1.0
    return loss, grad / n


class MlpNet:
    """Parameter container with forward pass and analytic gradients."""

    def __init__(self, d: int, hidden: int, rng: np.random.Generator):
        limit1 = np.sqrt(6.0 / (d + hidden))
        limit2 = np.sqrt(6.0 / (hidden + N_LEVELS))
        self.w1 = rng.uniform(-limit1, limit1, size=(d, hidden))
        self.b1 = np.zeros(hidden)
        self.w2 = rng.uniform(-limit2, limit2, size=(hidden, N_LEVELS))
        self.b2 = np.zeros(N_LEVELS)

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.maximum(x @ self.w1 + self.b1, 0.0)
        return h @ self.w2 + self.b2

    def loss(self, x: np.ndarray, y: np.ndarray) -> float:
        return softmax_cross_entropy(self.forward(x), y)[0]

    def loss_and_gradients(
        self, x: np.ndarray, y: np.ndarray
    ) -> tuple[float, dict[str, np.ndarray]]:
        pre = x @ self.w1 + self.b1
        h = np.maximum(pre, 0.0)
        logits = h @ self.w2 + self.b2
        loss, dlogits = softmax_cross_entropy(logits, y)
        grads = {
            "w2": h.T @ dlogits,
            "b2": dlogits.sum(axis=0),
        }
        dh = dlogits @ self.w2.T
        dpre = dh * (pre > 0.0)
        grads["w1"] = x.T @ dpre
        grads["b1"] = dpre.sum(axis=0)
        return loss, grads

    # Flat views are used by gradient checking, not by training.
    def get_flat(self) -> np.ndarray:
        return np.concatenate(
            [p.ravel() for p in (self.w1, self.b1, self.w2, self.b2)]
        )

    def set_flat(self, flat: np.ndarray) -> None:
        params = (self.w1, self.b1, self.w2, self.b2)
        total = sum(p.size for p in params)
        if len(flat) != total:
            raise ShapeError(
                f"flat parameter vector has length {len(flat)}, need {total}"
            )
        pos = 0
        for p in params:
            p[...] = flat[pos : pos + p.size].reshape(p.shape)
            pos += p.size

    def flat_gradients(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        _, grads = self.loss_and_gradients(x, y)
        return np.concatenate(
            [grads[k].ravel() for k in ("w1", "b1", "w2", "b2")]
        )

    def snapshot(self) -> dict[str, np.ndarray]:
        return {
            "w1": self.w1.copy(),
            "b1": self.b1.copy(),
            "w2": self.w2.copy(),
            "b2": self.b2.copy(),
        }

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        self.w1 = snap["w1"].copy()
        self.b1 = snap["b1"].copy()
        self.w2 = snap["w2"].copy()
        self.b2 = snap["b2"].copy()


class EarlyStopper:
    """Patience-based stopping on a validation metric (lower is better)."""

    def __init__(self, patience: int):
        if patience < 1:
            raise DataError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.best = np.inf
        self.best_epoch = -1
        self.stale = 0

    def update(self, value: float, epoch: int) -> bool:
        """Record one epoch; returns True when training should stop."""
        if value < self.best:
            self.best = value
            self.best_epoch = epoch
            self.stale = 0
            return False
        self.stale += 1
        return self.stale >= self.patience


class MlpModel(TrainedModel):
    def __init__(
        self, spec: ClassifierSpec, net: MlpNet, report: TrainingReport
    ):
        self.family = spec.family
        self.spec = spec
        self.net = net
        self.report = report
        self.pca = None

    def _predict_batch(self, x: np.ndarray) -> np.ndarray:
        logits = self.net.forward(x)
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        return exp / exp.sum(axis=1, keepdims=True)


def fit_mlp(
    x: np.ndarray, y: np.ndarray, spec: ClassifierSpec | None = None
) -> MlpModel:
    """Minibatch SGD with early stopping on a held-out validation slice."""
    if spec is None:
        spec = ClassifierSpec(family="mlp")
    x = np.asarray(x, dtype=np.float64)
    y = _check_training_labels(y, require_all_levels=False)
    if x.ndim != 2:
        raise ShapeError(f"mlp expects (n, d) features, got {x.shape}")
    n = x.shape[0]
    if n != len(y):
        raise ShapeError(f"{n} inputs vs {len(y)} labels")
    n_val = int(np.ceil(spec.validation_fraction * n))
    if n_val < 1 or n - n_val < 1:
        raise DataError(
            f"mlp needs enough samples for a validation split, got {n}"
        )

    rng = np.random.default_rng(spec.seed)
    net = MlpNet(x.shape[1], spec.hidden_size, rng)

    perm = rng.permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    x_train, y_train = x[train_idx], y[train_idx]
    x_val, y_val = x[val_idx], y[val_idx]

    stopper = EarlyStopper(spec.patience)
    best = net.snapshot()
    loss_curve: list[float] = []
    val_curve: list[float] = []
    lr = spec.learning_rate
    epochs_run = 0
    for epoch in range(spec.max_epochs):
        order = rng.permutation(len(y_train))
        epoch_losses = []
        for start in range(0, len(order), spec.mlp_batch_size):
            batch = order[start : start + spec.mlp_batch_size]
            loss, grads = net.loss_and_gradients(x_train[batch], y_train[batch])
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"mlp training diverged at epoch {epoch}"
                )
            epoch_losses.append(loss)
            net.w1 -= lr * grads["w1"]
            net.b1 -= lr * grads["b1"]
            net.w2 -= lr * grads["w2"]
            net.b2 -= lr * grads["b2"]
        loss_curve.append(float(np.mean(epoch_losses)))
        val_loss = net.loss(x_val, y_val)
        if not np.isfinite(val_loss):
            raise DivergenceError(f"mlp validation diverged at epoch {epoch}")
        val_curve.append(val_loss)
        epochs_run = epoch + 1
        improved = val_loss < stopper.best
        should_stop = stopper.update(val_loss, epoch)
        if improved:
            best = net.snapshot()
        if should_stop:
            break
    net.restore(best)

    report = TrainingReport(
        family=spec.family,
        seed=spec.seed,
        n_samples=n,
        n_features=x.shape[1],
        loss_curve=loss_curve,
        validation_curve=val_curve,
        epochs_run=epochs_run,
        best_epoch=stopper.best_epoch,
        details={"hidden": spec.hidden_size, "validation_samples": n_val},
    )
    return MlpModel(spec=spec, net=net, report=report)
