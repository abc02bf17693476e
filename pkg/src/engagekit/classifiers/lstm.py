"""Two-layer LSTM over full one-second sequences.

Input (n, 24, d) runs through two stacked LSTM layers; the last hidden state
feeds a ReLU layer and a softmax over the three levels.  Training is plain
Adam on softmax cross-entropy for a fixed number of epochs, with gradients
from manual backpropagation through time.
"""

from __future__ import annotations

import numpy as np

from ..errors import DataError, DivergenceError, ShapeError
from ..tracklets import FPS
from .base import (
    N_LEVELS,
    ClassifierSpec,
    TrainedModel,
    TrainingReport,
    _check_training_labels,
)
from .mlp import softmax_cross_entropy


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class _LstmLayer:
    """One LSTM layer; gates stacked [input, forget, cell, output]."""

    def __init__(self, input_size: int, hidden: int, rng: np.random.Generator):
        limit = np.sqrt(6.0 / (input_size + hidden))
        self.wx = rng.uniform(-limit, limit, size=(input_size, 4 * hidden))
        limit_h = np.sqrt(6.0 / (hidden + hidden))
        self.wh = rng.uniform(-limit_h, limit_h, size=(hidden, 4 * hidden))
        self.b = np.zeros(4 * hidden)
        self.hidden = hidden

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        """Run the layer over (n, T, d); returns hidden states and caches."""
        n, t_steps, _ = x.shape
        hsize = self.hidden
        h = np.zeros((n, hsize))
        c = np.zeros((n, hsize))
        hs = np.empty((n, t_steps, hsize))
        caches = []
        for t in range(t_steps):
            xt = x[:, t]
            z = xt @ self.wx + h @ self.wh + self.b
            i = _sigmoid(z[:, :hsize])
            f = _sigmoid(z[:, hsize : 2 * hsize])
            g = np.tanh(z[:, 2 * hsize : 3 * hsize])
            o = _sigmoid(z[:, 3 * hsize :])
            c_new = f * c + i * g
            tanh_c = np.tanh(c_new)
            h_new = o * tanh_c
            caches.append((xt, h, c, i, f, g, o, tanh_c))
            h, c = h_new, c_new
            hs[:, t] = h
        return hs, caches

    def backward(
        self, dh_out: np.ndarray, caches: list
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Backpropagate through time.

        ``dh_out`` is the loss gradient arriving at each step's hidden
        output from outside the layer.  Returns (dwx, dwh, db, dx).
        """
        n, t_steps, hsize = dh_out.shape
        dwx = np.zeros_like(self.wx)
        dwh = np.zeros_like(self.wh)
        db = np.zeros_like(self.b)
        dx = np.empty((n, t_steps, self.wx.shape[0]))
        dh_next = np.zeros((n, hsize))
        dc_next = np.zeros((n, hsize))
        for t in reversed(range(t_steps)):
            xt, h_prev, c_prev, i, f, g, o, tanh_c = caches[t]
            dh = dh_out[:, t] + dh_next
            do = dh * tanh_c
            dc = dc_next + dh * o * (1.0 - tanh_c**2)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc_next = dc * f
            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g**2),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            dwx += xt.T @ dz
            dwh += h_prev.T @ dz
            db += dz.sum(axis=0)
            dx[:, t] = dz @ self.wx.T
            dh_next = dz @ self.wh.T
        return dwx, dwh, db, dx


class LstmNet:
    """Stacked LSTM layers plus the ReLU/softmax head."""

    def __init__(
        self,
        d: int,
        hidden: int,
        fc: int,
        rng: np.random.Generator,
        layers: int = 2,
    ):
        self.layers = []
        size = d
        for _ in range(layers):
            self.layers.append(_LstmLayer(size, hidden, rng))
            size = hidden
        limit_f = np.sqrt(6.0 / (hidden + fc))
        self.wf = rng.uniform(-limit_f, limit_f, size=(hidden, fc))
        self.bf = np.zeros(fc)
        limit_o = np.sqrt(6.0 / (fc + N_LEVELS))
        self.wo = rng.uniform(-limit_o, limit_o, size=(fc, N_LEVELS))
        self.bo = np.zeros(N_LEVELS)

    def forward(self, x: np.ndarray) -> np.ndarray:
        seq = x
        for layer in self.layers:
            seq, _ = layer.forward(seq)
        a = np.maximum(seq[:, -1] @ self.wf + self.bf, 0.0)
        return a @ self.wo + self.bo

    def loss(self, x: np.ndarray, y: np.ndarray) -> float:
        return softmax_cross_entropy(self.forward(x), y)[0]

    def loss_and_gradients(
        self, x: np.ndarray, y: np.ndarray
    ) -> tuple[float, list[np.ndarray]]:
        """Loss and gradients in parameter order (see ``parameters``)."""
        seq = x
        layer_io = []
        for layer in self.layers:
            out, caches = layer.forward(seq)
            layer_io.append((out, caches))
            seq = out
        h_last = seq[:, -1]
        pre = h_last @ self.wf + self.bf
        a = np.maximum(pre, 0.0)
        logits = a @ self.wo + self.bo
        loss, dlogits = softmax_cross_entropy(logits, y)

        dwo = a.T @ dlogits
        dbo = dlogits.sum(axis=0)
        da = dlogits @ self.wo.T
        dpre = da * (pre > 0.0)
        dwf = h_last.T @ dpre
        dbf = dpre.sum(axis=0)
        dh_last = dpre @ self.wf.T

        n, t_steps, _ = x.shape
        grads_per_layer: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = [
            None
        ] * len(self.layers)
        dh_out = np.zeros((n, t_steps, self.layers[-1].hidden))
        dh_out[:, -1] = dh_last
        for li in reversed(range(len(self.layers))):
            layer = self.layers[li]
            _, caches = layer_io[li]
            dwx, dwh, db, dx = layer.backward(dh_out, caches)
            grads_per_layer[li] = (dwx, dwh, db)
            dh_out = dx
        grads: list[np.ndarray] = []
        for dwx, dwh, db in grads_per_layer:
            grads.extend([dwx, dwh, db])
        grads.extend([dwf, dbf, dwo, dbo])
        return loss, grads

    def parameters(self) -> list[np.ndarray]:
        params: list[np.ndarray] = []
        for layer in self.layers:
            params.extend([layer.wx, layer.wh, layer.b])
        params.extend([self.wf, self.bf, self.wo, self.bo])
        return params

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def set_flat(self, flat: np.ndarray) -> None:
        params = self.parameters()
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
        return np.concatenate([g.ravel() for g in grads])


class AdamOptimizer:
    """Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(
        self,
        params: list[np.ndarray],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            mhat = m / (1.0 - b1**self.t)
            vhat = v / (1.0 - b2**self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class LstmModel(TrainedModel):
    def __init__(
        self, spec: ClassifierSpec, net: LstmNet, report: TrainingReport
    ):
        self.family = spec.family
        self.spec = spec
        self.net = net
        self.report = report
        self.pca = None

    def _predict_batch(self, x: np.ndarray) -> np.ndarray:
        if x.shape[1] != FPS:
            raise ShapeError(
                f"lstm expects sequences of {FPS} frames, got {x.shape[1]}"
            )
        logits = self.net.forward(x)
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        return exp / exp.sum(axis=1, keepdims=True)


def fit_lstm(
    x: np.ndarray, y: np.ndarray, spec: ClassifierSpec | None = None
) -> LstmModel:
    """Adam training for a fixed epoch count on (n, 24, d) sequences."""
    if spec is None:
        spec = ClassifierSpec(family="lstm")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] != FPS:
        raise ShapeError(
            f"lstm training input must be (n, {FPS}, d), got {x.shape}"
        )
    y = _check_training_labels(y, require_all_levels=False)
    n = x.shape[0]
    if n != len(y):
        raise ShapeError(f"{n} inputs vs {len(y)} labels")
    if n == 0:
        raise DataError("empty training set")

    rng = np.random.default_rng(spec.seed)
    net = LstmNet(x.shape[2], spec.hidden_size, spec.fc_size, rng)
    optimizer = AdamOptimizer(net.parameters(), spec.learning_rate)

    loss_curve: list[float] = []
    for epoch in range(spec.lstm_epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, spec.lstm_batch_size):
            batch = order[start : start + spec.lstm_batch_size]
            loss, grads = net.loss_and_gradients(x[batch], y[batch])
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"lstm training diverged at epoch {epoch}"
                )
            optimizer.step(grads)
            epoch_losses.append(loss)
        loss_curve.append(float(np.mean(epoch_losses)))

    report = TrainingReport(
        family=spec.family,
        seed=spec.seed,
        n_samples=n,
        n_features=x.shape[2],
        loss_curve=loss_curve,
        epochs_run=spec.lstm_epochs,
        best_epoch=spec.lstm_epochs - 1,
        details={
            "hidden": spec.hidden_size,
            "fc": spec.fc_size,
            "layers": len(net.layers),
        },
    )
    return LstmModel(spec=spec, net=net, report=report)
