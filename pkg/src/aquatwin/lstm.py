"""Single-layer LSTM regressor trained with backpropagation through time.

Gate layout follows the classic formulation: every gate reads the
concatenation ``[h_{t-1}, x_t]``; the last hidden state goes through a
linear dense head to give one scalar prediction per sequence.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data import MinMaxParams, minmax_scale
from .features import FeatureMatrix

CHECKPOINT_VERSION = 1
GATES = ("f", "i", "c", "o")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class LstmParams:
    W_f: np.ndarray
    W_i: np.ndarray
    W_c: np.ndarray
    W_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray
    w_out: np.ndarray
    b_out: float

    def __post_init__(self):
        H, HD = self.W_f.shape
        for name in ("W_i", "W_c", "W_o"):
            if getattr(self, name).shape != (H, HD):
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {(H, HD)}")
        for name in ("b_f", "b_i", "b_c", "b_o", "w_out"):
            if getattr(self, name).shape != (H,):
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {(H,)}")
        if HD <= H:
            raise ValueError("weight matrices must span [h, x] with at least one input")

    @property
    def hidden_size(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_f.shape[1] - self.W_f.shape[0]

    @classmethod
    def zeros(cls, hidden_size: int, input_size: int) -> "LstmParams":
        H, HD = hidden_size, hidden_size + input_size
        return cls(*(np.zeros((H, HD)) for _ in range(4)), *(np.zeros(H) for _ in range(4)),
                   np.zeros(H), 0.0)

    @classmethod
    def init(cls, hidden_size: int, input_size: int, rng: np.random.Generator) -> "LstmParams":
        """Uniform weights in +/- 1/sqrt(fan_in); zero biases."""
        H, HD = hidden_size, hidden_size + input_size
        a = 1.0 / math.sqrt(HD)
        gates = [rng.uniform(-a, a, size=(H, HD)) for _ in range(4)]
        a_out = 1.0 / math.sqrt(H)
        return cls(*gates, *(np.zeros(H) for _ in range(4)), rng.uniform(-a_out, a_out, size=H), 0.0)

    def names(self) -> list[str]:
        return ["W_f", "W_i", "W_c", "W_o", "b_f", "b_i", "b_c", "b_o", "w_out", "b_out"]

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: np.atleast_1d(np.asarray(getattr(self, n), dtype=float)) for n in self.names()}

    def copy(self) -> "LstmParams":
        return LstmParams(*(np.array(getattr(self, n), dtype=float) for n in self.names()[:-1]),
                          float(self.b_out))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays().values()])

    def with_flat(self, vec: np.ndarray) -> "LstmParams":
        out, pos = [], 0
        for n, a in self.arrays().items():
            out.append(vec[pos:pos + a.size].reshape(a.shape))
            pos += a.size
        out[-1] = float(out[-1][0])
        return LstmParams(*out)


@dataclass
class LstmState:
    """Cell and hidden state after one step, with the gate activations that produced them."""

    C: np.ndarray
    h: np.ndarray
    f: np.ndarray | None = None
    i: np.ndarray | None = None
    c_tilde: np.ndarray | None = None
    o: np.ndarray | None = None


def cell_forward(params: LstmParams, state: LstmState, x_t) -> LstmState:
    """One LSTM step. Works on a single vector or a batch (leading axis)."""
    x_t = np.asarray(x_t, dtype=float)
    if x_t.shape[-1] != params.input_size:
        raise ValueError(f"input has {x_t.shape[-1]} features, cell expects {params.input_size}")
    if np.shape(state.h)[-1] != params.hidden_size or np.shape(state.C)[-1] != params.hidden_size:
        raise ValueError("state size does not match hidden size")
    z = np.concatenate([state.h, x_t], axis=-1)
    f = expit(z @ params.W_f.T + params.b_f)
    i = expit(z @ params.W_i.T + params.b_i)
    c_tilde = np.tanh(z @ params.W_c.T + params.b_c)
    C = f * state.C + i * c_tilde
    o = expit(z @ params.W_o.T + params.b_o)
    h = o * np.tanh(C)
    return LstmState(C, h, f, i, c_tilde, o)


def _run(params: LstmParams, X: np.ndarray):
    """Forward over a batch ``X[B, L, D]``; returns predictions and the step cache."""
    B, L, _ = X.shape
    H = params.hidden_size
    state = LstmState(np.zeros((B, H)), np.zeros((B, H)))
    cache = []
    for t in range(L):
        prev = state
        state = cell_forward(params, prev, X[:, t, :])
        cache.append((prev, state, np.concatenate([prev.h, X[:, t, :]], axis=1)))
    pred = state.h @ params.w_out + params.b_out
    return pred, cache


def forward_sequence(params: LstmParams, X_seq) -> float | np.ndarray:
    """Predict from one sequence ``[L, D]`` (scalar) or a batch ``[B, L, D]`` (vector).

    Both states start at zero.
    """
    X = np.asarray(X_seq, dtype=float)
    single = X.ndim == 2
    if single:
        X = X[None]
    if X.ndim != 3:
        raise ValueError(f"expected [L, D] or [B, L, D], got shape {X.shape}")
    pred, _ = _run(params, X)
    return float(pred[0]) if single else pred


def loss(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=float)
    y = np.asarray(targets, dtype=float)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {y.shape}")
    if p.size == 0:
        raise ValueError("loss of an empty batch")
    return float(np.mean((p - y) ** 2))


def backward(params: LstmParams, X, y) -> tuple[float, dict[str, np.ndarray]]:
    """MSE loss on a batch and its gradient for every parameter (full BPTT)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    pred, cache = _run(params, X)
    value = loss(pred, y)
    B = X.shape[0]
    H = params.hidden_size
    d_pred = 2.0 * (pred - y) / B

    h_last = cache[-1][1].h
    grads = {n: np.zeros_like(a) for n, a in params.arrays().items()}
    grads["w_out"] = h_last.T @ d_pred
    grads["b_out"] = np.array([d_pred.sum()])

    dh = np.outer(d_pred, params.w_out)
    dC = np.zeros((B, H))
    for prev, st, z in reversed(cache):
        tanh_C = np.tanh(st.C)
        do = dh * tanh_C
        dC = dC + dh * st.o * (1.0 - tanh_C ** 2)
        df = dC * prev.C
        di = dC * st.c_tilde
        dct = dC * st.i
        dC = dC * st.f

        a_f = df * st.f * (1.0 - st.f)
        a_i = di * st.i * (1.0 - st.i)
        a_c = dct * (1.0 - st.c_tilde ** 2)
        a_o = do * st.o * (1.0 - st.o)
        dz = np.zeros_like(z)
        for gate, a in zip(GATES, (a_f, a_i, a_c, a_o)):
            grads[f"W_{gate}"] += a.T @ z
            grads[f"b_{gate}"] += a.sum(axis=0)
            dz += a @ getattr(params, f"W_{gate}")
        dh = dz[:, :H]
    return value, grads


def make_sequences(matrix: FeatureMatrix, L: int) -> tuple[np.ndarray, np.ndarray]:
    """Sliding windows of ``L`` consecutive rows; each predicts the next row's target."""
    X, y = np.asarray(matrix.X, dtype=float), np.asarray(matrix.y, dtype=float)
    return _windows(X, y, L)


def _windows(X: np.ndarray, y: np.ndarray, L: int) -> tuple[np.ndarray, np.ndarray]:
    n = X.shape[0]
    if L < 1:
        raise ValueError("sequence length must be >= 1")
    if n <= L:
        raise ValueError(f"need more than {L} rows to build sequences, got {n}")
    idx = np.arange(L)[None, :] + np.arange(n - L)[:, None]
    return X[idx], y[L:]


@dataclass(frozen=True)
class TrainConfig:
    sequence_length: int = 14
    hidden_size: int = 16
    epochs: int = 60
    learning_rate: float = 0.01
    batch_size: int = 32
    seed: int = 42
    validation_fraction: float = 0.1

    def __post_init__(self):
        for name in ("sequence_length", "hidden_size", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        if not 0.0 <= self.validation_fraction <= 0.5:
            raise ValueError("validation_fraction must lie in [0, 0.5]")


@dataclass
class LstmModel:
    params: LstmParams
    x_scaling: list[MinMaxParams]
    y_scaling: MinMaxParams
    config: TrainConfig
    columns: list[str]
    history: dict[str, list[float]] = field(default_factory=dict)

    def scale_inputs(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.stack([s.transform(X[..., j]) for j, s in enumerate(self.x_scaling)], axis=-1)


def train(matrix: FeatureMatrix, config: TrainConfig = TrainConfig(),
          init: LstmParams | None = None) -> LstmModel:
    """Fit on ``matrix`` (rows in time order) with plain mini-batch gradient descent.

    Inputs and target are min-max scaled with statistics from ``matrix``.
    The last ``validation_fraction`` of the sequences is held out and scored
    after every epoch. Raises :class:`TrainingDiverged` on a non-finite loss.
    """
    x_scaling = []
    Xs = np.empty_like(matrix.X, dtype=float)
    for j in range(matrix.X.shape[1]):
        Xs[:, j], p = minmax_scale(matrix.X[:, j])
        x_scaling.append(p)
    ys, y_scaling = minmax_scale(matrix.y)
    Xseq, yseq = _windows(Xs, ys, config.sequence_length)

    n_val = int(math.floor(len(yseq) * config.validation_fraction))
    n_fit = len(yseq) - n_val
    if n_fit < 1:
        raise ValueError("no training sequences left after the validation hold-out")
    X_fit, y_fit = Xseq[:n_fit], yseq[:n_fit]
    X_val, y_val = Xseq[n_fit:], yseq[n_fit:]

    rng = np.random.default_rng(config.seed)
    params = init.copy() if init is not None else LstmParams.init(config.hidden_size, Xs.shape[1], rng)
    history = {"train": [], "validation": []}
    with np.errstate(over="ignore", invalid="ignore"):
        _epochs(params, config, rng, X_fit, y_fit, X_val, y_val, history)
    return LstmModel(params, x_scaling, y_scaling, config, list(matrix.columns), history)


def _epochs(params, config, rng, X_fit, y_fit, X_val, y_val, history) -> None:
    n_fit = len(y_fit)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n_fit)
        for start in range(0, n_fit, config.batch_size):
            batch = order[start:start + config.batch_size]
            _, grads = backward(params, X_fit[batch], y_fit[batch])
            for name in params.names()[:-1]:
                setattr(params, name, getattr(params, name) - config.learning_rate * grads[name])
            params.b_out = float(params.b_out - config.learning_rate * grads["b_out"][0])
        train_loss = loss(forward_sequence(params, X_fit), y_fit)
        if not math.isfinite(train_loss):
            raise TrainingDiverged(f"training loss became {train_loss} at epoch {epoch}")
        history["train"].append(train_loss)
        if len(y_val):
            history["validation"].append(loss(forward_sequence(params, X_val), y_val))


def predict(model: LstmModel, window) -> float | np.ndarray:
    """Forecast in original units from the most recent raw window(s).

    ``window`` is ``[L, D]`` for one forecast or ``[B, L, D]`` for a batch.
    """
    W = np.asarray(window, dtype=float)
    L = model.config.sequence_length
    if W.shape[-2] != L:
        raise ValueError(f"window has {W.shape[-2]} steps, model expects {L}")
    if W.shape[-1] != len(model.x_scaling):
        raise ValueError(f"window has {W.shape[-1]} features, model expects {len(model.x_scaling)}")
    z = forward_sequence(model.params, model.scale_inputs(W))
    out = model.y_scaling.inverse(z)
    return float(out) if np.ndim(out) == 0 else out


def save_checkpoint(model: LstmModel, path) -> None:
    """Write the model as JSON: every parameter array, scaling bounds, config."""
    doc = {
        "format": "aquatwin-lstm",
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "columns": model.columns,
        "x_scaling": [[s.x_min, s.x_max] for s in model.x_scaling],
        "y_scaling": [model.y_scaling.x_min, model.y_scaling.x_max],
        "params": {n: a.tolist() for n, a in model.params.arrays().items()},
        "history": model.history,
    }
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def load_checkpoint(path) -> LstmModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != "aquatwin-lstm" or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} LSTM checkpoint")
    p = doc["params"]
    params = LstmParams(*(np.asarray(p[n], dtype=float) for n in
                          ("W_f", "W_i", "W_c", "W_o", "b_f", "b_i", "b_c", "b_o", "w_out")),
                        float(p["b_out"][0]))
    return LstmModel(
        params,
        [MinMaxParams(*b) for b in doc["x_scaling"]],
        MinMaxParams(*doc["y_scaling"]),
        TrainConfig(**doc["config"]),
        doc["columns"],
        doc.get("history", {}),
    )


def gradient_check(params: LstmParams, X, y, step: float = 1e-5) -> dict[str, float]:
    """Relative error of :func:`backward` against central differences, per parameter array.

    The error of an array is ``||a - n|| / (||a|| + ||n||)`` (0 when both
    vanish). Differences are taken on the loss evaluated in extended
    precision so that round-off does not swamp small gradients.
    """
    _, analytic = backward(params, X, y)
    Xl = np.asarray(X, dtype=np.longdouble)
    yl = np.asarray(y, dtype=np.longdouble)
    base = {n: np.asarray(a, dtype=np.longdouble) for n, a in params.arrays().items()}

    def loss_at(arrays):
        p = LstmParams(*(arrays[n] for n in params.names()[:-1]), arrays["b_out"][0])
        pred, _ = _run(p, Xl)
        return np.mean((pred - yl) ** 2)

    out = {}
    for name, a in base.items():
        num = np.zeros(a.shape, dtype=np.longdouble)
        for k in np.ndindex(a.shape):
            trial = dict(base)
            for sign in (1, -1):
                shifted = a.copy()
                shifted[k] += sign * step
                trial[name] = shifted
                num[k] += sign * loss_at(trial)
        num /= 2 * step
        num = num.astype(float)
        diff = float(np.linalg.norm(analytic[name] - num))
        scale = float(np.linalg.norm(analytic[name]) + np.linalg.norm(num))
        out[name] = 0.0 if scale == 0.0 else diff / scale
    return out
