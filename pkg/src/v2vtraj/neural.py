"""Tapped-delay-line networks with optional Elman recurrence, in plain numpy.

One hidden sigmoid layer and a linear readout::

    h_t = sigmoid(W_in @ vec(window_t) + W_rec @ h_{t-1} + b_h)
    y_t = W_out @ h_t + b_o

A window is an ``(n_inputs, n_delays)`` matrix, oldest tap in column 0 and
``vec`` flattens it row by row (channel-major). Datasets carry a time axis:
``X`` is ``(n_samples, n_steps, n_inputs, n_delays)`` and ``Y`` is
``(n_samples, n_steps, n_outputs)``. Feedforward nets use ``n_steps == 1``;
recurrent nets start every sequence from a zero hidden state, which gives
truncated backpropagation through time over the sequence length.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch, DivergenceDetected, EmptyDataset, MissingExogenous

PARAM_NAMES = ("W_in", "b_h", "W_rec", "W_out", "b_o")


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True, eq=False)
class TdlNetwork:
    n_inputs: int
    n_delays: int
    n_hidden: int
    n_outputs: int
    W_in: np.ndarray
    b_h: np.ndarray
    W_rec: np.ndarray
    W_out: np.ndarray
    b_o: np.ndarray
    recurrent: bool = False
    # Leading input rows that are fed back from the outputs in closed loop.
    n_feedback: int = 0
    hidden_activation: str = field(default="logistic", compare=False)
    output_activation: str = field(default="linear", compare=False)

    def __post_init__(self):
        shapes = {
            "W_in": (self.n_hidden, self.n_inputs * self.n_delays),
            "b_h": (self.n_hidden,),
            "W_rec": (self.n_hidden, self.n_hidden),
            "W_out": (self.n_outputs, self.n_hidden),
            "b_o": (self.n_outputs,),
        }
        for name, shape in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite weights")
            object.__setattr__(self, name, arr)
        if not self.recurrent and np.any(self.W_rec != 0):
            raise ValueError("W_rec must be zero for a non-recurrent network")
        if not 0 <= self.n_feedback <= min(self.n_inputs, self.n_outputs):
            raise DimensionMismatch(f"n_feedback={self.n_feedback} exceeds inputs/outputs")

    def __eq__(self, other) -> bool:
        if not isinstance(other, TdlNetwork):
            return NotImplemented
        dims = ("n_inputs", "n_delays", "n_hidden", "n_outputs", "recurrent", "n_feedback")
        return all(getattr(self, k) == getattr(other, k) for k in dims) and all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in PARAM_NAMES
        )

    __hash__ = None

    @property
    def n_exogenous(self) -> int:
        return self.n_inputs - self.n_feedback

    def params(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def trainable(self) -> tuple:
        return PARAM_NAMES if self.recurrent else tuple(n for n in PARAM_NAMES if n != "W_rec")

    def with_params(self, params: dict) -> "TdlNetwork":
        return replace(self, **{k: np.array(v, dtype=float) for k, v in params.items()})

    def n_weights(self) -> int:
        return sum(getattr(self, n).size for n in self.trainable())

    def to_dict(self) -> dict:
        d = {
            "n_inputs": self.n_inputs,
            "n_delays": self.n_delays,
            "n_hidden": self.n_hidden,
            "n_outputs": self.n_outputs,
            "recurrent": self.recurrent,
            "n_feedback": self.n_feedback,
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
        }
        for name in PARAM_NAMES:
            d[name] = getattr(self, name).tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TdlNetwork":
        kwargs = {k: d[k] for k in ("n_inputs", "n_delays", "n_hidden", "n_outputs", "recurrent", "n_feedback")}
        for name in PARAM_NAMES:
            kwargs[name] = np.array(d[name], dtype=float)
        return cls(**kwargs)


def init_network(n_inputs: int, n_outputs: int, n_delays: int = 15, n_hidden: int = 20,
                 recurrent: bool = False, n_feedback: int = 0, seed: int = 0) -> TdlNetwork:
    """Uniform ``[-0.5, 0.5] / sqrt(fan_in)`` initialization."""
    rng = np.random.default_rng(seed)
    fan_in = n_inputs * n_delays + (n_hidden if recurrent else 0)

    def uniform(shape, fan):
        return rng.uniform(-0.5, 0.5, shape) / np.sqrt(fan)

    W_in = uniform((n_hidden, n_inputs * n_delays), fan_in)
    b_h = uniform(n_hidden, fan_in)
    W_rec = uniform((n_hidden, n_hidden), fan_in) if recurrent else np.zeros((n_hidden, n_hidden))
    W_out = uniform((n_outputs, n_hidden), n_hidden)
    b_o = uniform(n_outputs, n_hidden)
    return TdlNetwork(n_inputs, n_delays, n_hidden, n_outputs, W_in, b_h, W_rec, W_out, b_o,
                      recurrent=recurrent, n_feedback=n_feedback)


def forward(net: TdlNetwork, window, hidden_prev=None):
    """One step for a single window; returns ``(output, hidden)``."""
    window = np.asarray(window, dtype=float)
    if window.shape != (net.n_inputs, net.n_delays):
        raise DimensionMismatch(f"window shape {window.shape} != {(net.n_inputs, net.n_delays)}")
    pre = net.W_in @ window.reshape(-1) + net.b_h
    if net.recurrent and hidden_prev is not None:
        hidden_prev = np.asarray(hidden_prev, dtype=float)
        if hidden_prev.shape != (net.n_hidden,):
            raise DimensionMismatch(f"hidden state shape {hidden_prev.shape} != {(net.n_hidden,)}")
        pre = pre + net.W_rec @ hidden_prev
    hidden = sigmoid(pre)
    return net.W_out @ hidden + net.b_o, hidden


class Dataset(NamedTuple):
    X: np.ndarray  # (n_samples, n_steps, n_inputs, n_delays)
    Y: np.ndarray  # (n_samples, n_steps, n_outputs)

    def __len__(self):
        return len(self.X)

    @classmethod
    def feedforward(cls, X, Y) -> "Dataset":
        """Wrap ``(n, inputs, delays)`` windows and ``(n, outputs)`` targets."""
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        return cls(X[:, None], Y.reshape(len(Y), 1, -1))


def _check_dataset(net: TdlNetwork, data: Dataset, label: str) -> None:
    if data is None or len(data.X) == 0:
        raise EmptyDataset(f"{label} dataset is empty")
    n, t = data.X.shape[:2]
    if data.X.shape[2:] != (net.n_inputs, net.n_delays) or data.Y.shape != (n, t, net.n_outputs):
        raise DimensionMismatch(
            f"{label} dataset shapes X{data.X.shape} Y{data.Y.shape} do not fit the network"
        )


def _run(params: dict, X: np.ndarray, recurrent: bool):
    n, steps = X.shape[:2]
    flat = X.reshape(n, steps, -1)
    W_in, b_h, W_rec, W_out, b_o = (params[k] for k in PARAM_NAMES)
    hidden = np.empty((n, steps, W_in.shape[0]))
    h = np.zeros((n, W_in.shape[0]))
    for t in range(steps):
        pre = flat[:, t] @ W_in.T + b_h
        if recurrent and t > 0:
            pre += h @ W_rec.T
        h = sigmoid(pre)
        hidden[:, t] = h
    out = hidden @ W_out.T + b_o
    return hidden, out


def loss_and_grad(net: TdlNetwork, data: Dataset, params: dict | None = None, need_grad: bool = True):
    """Mean-squared error over every output and step, with its gradient."""
    params = net.params() if params is None else params
    X, Y = data
    hidden, out = _run(params, X, net.recurrent)
    err = out - Y
    loss = float(np.mean(err**2))
    if not need_grad:
        return loss, None

    n, steps = X.shape[:2]
    flat = X.reshape(n, steps, -1)
    d_out = 2.0 * err / err.size
    W_rec, W_out = params["W_rec"], params["W_out"]
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    grads["W_out"] = np.einsum("nto,nth->oh", d_out, hidden)
    grads["b_o"] = d_out.sum(axis=(0, 1))
    d_pre_next = None
    for t in range(steps - 1, -1, -1):
        d_h = d_out[:, t] @ W_out
        if d_pre_next is not None:
            d_h += d_pre_next @ W_rec
        h = hidden[:, t]
        d_pre = d_h * h * (1.0 - h)
        grads["W_in"] += d_pre.T @ flat[:, t]
        grads["b_h"] += d_pre.sum(axis=0)
        if net.recurrent and t > 0:
            grads["W_rec"] += d_pre.T @ hidden[:, t - 1]
        d_pre_next = d_pre if net.recurrent else None
    return loss, grads


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    momentum: float = 0.9
    max_epochs: int = 2000
    patience: int = 100
    seed: int = 0
    bptt_window: int = 15

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


class TrainResult(NamedTuple):
    net: TdlNetwork
    train_loss: list
    cv_loss: list
    best_epoch: int


def train_batch(net: TdlNetwork, train: Dataset, cv: Dataset, cfg: TrainConfig) -> TrainResult:
    """Full-batch gradient descent with classical momentum and early stopping.

    Returns the weights with the lowest cross-validation loss. The loss
    histories record the losses of the weights entering each epoch.
    """
    _check_dataset(net, train, "training")
    _check_dataset(net, cv, "cross-validation")
    names = net.trainable()
    params = {k: v.copy() for k, v in net.params().items()}
    velocity = {k: np.zeros_like(params[k]) for k in names}
    best = (np.inf, {k: v.copy() for k, v in params.items()}, 0)
    train_hist, cv_hist = [], []
    stale = 0
    for epoch in range(cfg.max_epochs):
        loss, grads = loss_and_grad(net, train, params)
        cv_loss, _ = loss_and_grad(net, cv, params, need_grad=False)
        if not (np.isfinite(loss) and np.isfinite(cv_loss)):
            raise DivergenceDetected(epoch, loss if not np.isfinite(loss) else cv_loss)
        train_hist.append(loss)
        cv_hist.append(cv_loss)
        if cv_loss < best[0]:
            best = (cv_loss, {k: v.copy() for k, v in params.items()}, epoch)
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
        for k in names:
            velocity[k] = cfg.momentum * velocity[k] - cfg.learning_rate * grads[k]
            params[k] = params[k] + velocity[k]
    return TrainResult(net.with_params(best[1]), train_hist, cv_hist, best[2])


def gradient_check(net: TdlNetwork, data: Dataset, epsilon: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences."""
    if not 0 < epsilon <= 1e-3:
        raise ValueError("epsilon must lie in (0, 1e-3]")
    _check_dataset(net, data, "gradient-check")
    params = {k: v.copy() for k, v in net.params().items()}
    _, grads = loss_and_grad(net, data, params)
    worst = 0.0
    for name in net.trainable():
        p = params[name]
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + epsilon
            up, _ = loss_and_grad(net, data, params, need_grad=False)
            p[idx] = orig - epsilon
            down, _ = loss_and_grad(net, data, params, need_grad=False)
            p[idx] = orig
            g_fd = (up - down) / (2.0 * epsilon)
            g_a = grads[name][idx]
            rel = abs(g_a - g_fd) / max(abs(g_a) + abs(g_fd), 1e-8)
            worst = max(worst, rel)
    return worst


def _shift(window: np.ndarray, rows: slice, values) -> None:
    window[rows, :-1] = window[rows, 1:]
    window[rows, -1] = values


def predict_closed_loop(net: TdlNetwork, seed_window, exogenous=None, steps: int = 10,
                        hidden=None, return_hidden: bool = False):
    """Roll the network ``steps`` ahead feeding its outputs back into the delay line.

    Before each step the next exogenous column (if the net has exogenous
    rows) is shifted in; after it, outputs are shifted into the feedback rows.
    ``hidden`` seeds the recurrent state. Returns ``(n_outputs, steps)``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    window = np.array(seed_window, dtype=float)
    if window.shape != (net.n_inputs, net.n_delays):
        raise DimensionMismatch(f"seed window shape {window.shape} != {(net.n_inputs, net.n_delays)}")
    exo_rows = slice(net.n_feedback, net.n_inputs)
    if net.n_exogenous:
        if exogenous is None:
            raise MissingExogenous(f"network expects {net.n_exogenous} exogenous channels")
        exogenous = np.asarray(exogenous, dtype=float).reshape(net.n_exogenous, -1)
        if exogenous.shape[1] < steps:
            raise MissingExogenous(f"exogenous input covers {exogenous.shape[1]} of {steps} steps")
    out = np.empty((net.n_outputs, steps))
    h = None if hidden is None else np.asarray(hidden, dtype=float)
    for j in range(steps):
        if net.n_exogenous:
            _shift(window, exo_rows, exogenous[:, j])
        y, h = forward(net, window, h)
        out[:, j] = y
        if net.n_feedback:
            _shift(window, slice(0, net.n_feedback), y[: net.n_feedback])
    if return_hidden:
        return out, h
    return out


def run_sequence(net: TdlNetwork, windows, hidden=None):
    """Teacher-forced pass over consecutive windows; returns ``(outputs, hidden)``."""
    h = None if hidden is None else np.asarray(hidden, dtype=float)
    outs = []
    for w in windows:
        y, h = forward(net, w, h)
        outs.append(y)
    return np.array(outs).reshape(len(outs), net.n_outputs), h
