"""Stacked LSTM + fully connected ReLU head, sequence-to-one, in plain numpy.

Parameters live in a flat ``dict[str, ndarray]``:

* ``lstm{k}.W`` ``(in_dim, 4H)``, ``lstm{k}.U`` ``(H, 4H)``, ``lstm{k}.b`` ``(4H,)``
  with gate blocks ordered input, forget, cell candidate, output;
* ``fc.W`` ``(H, head_units)``, ``fc.b``;
* ``out.W`` ``(head_units, output_dim)``, ``out.b``.

Gradients use the same keys.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

Params = dict[str, np.ndarray]


class DimensionError(ValueError):
    pass


class NumericError(FloatingPointError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    hidden_units: int = 32
    lstm_layers: int = 1
    head_units: int | None = None
    output_dim: int = 1
    window_len: int = 10
    seed: int = 0
    forget_bias: float = 1.0

    def __post_init__(self):
        if self.head_units is None:
            object.__setattr__(self, "head_units", self.hidden_units)
        for name in ("input_dim", "hidden_units", "lstm_layers", "head_units", "window_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.output_dim not in (1, 2):
            raise ValueError("output_dim must be 1 or 2")

    def as_dict(self) -> dict:
        return asdict(self)


def sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def init_params(cfg: ModelConfig, rng: np.random.Generator | None = None) -> Params:
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    H = cfg.hidden_units
    bound = 1.0 / np.sqrt(H)
    params: Params = {}
    in_dim = cfg.input_dim
    for k in range(cfg.lstm_layers):
        params[f"lstm{k}.W"] = rng.uniform(-bound, bound, (in_dim, 4 * H))
        params[f"lstm{k}.U"] = rng.uniform(-bound, bound, (H, 4 * H))
        b = rng.uniform(-bound, bound, 4 * H)
        b[H:2 * H] = cfg.forget_bias
        params[f"lstm{k}.b"] = b
        in_dim = H
    params["fc.W"] = rng.uniform(-bound, bound, (H, cfg.head_units))
    params["fc.b"] = rng.uniform(-bound, bound, cfg.head_units)
    hb = 1.0 / np.sqrt(cfg.head_units)
    params["out.W"] = rng.uniform(-hb, hb, (cfg.head_units, cfg.output_dim))
    params["out.b"] = rng.uniform(-hb, hb, cfg.output_dim)
    return params


def zeros_like_params(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


def lstm_forward(W, U, b, X, h0=None, c0=None):
    """Run one LSTM layer over ``X`` of shape ``(batch, T, in_dim)``.

    Returns the hidden sequence ``(batch, T, H)``, the final hidden state and a
    cache for :func:`lstm_backward`.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or X.shape[2] != W.shape[0]:
        raise DimensionError(f"expected input (batch, T, {W.shape[0]}), got {X.shape}")
    B, T, _ = X.shape
    H = U.shape[0]
    h = np.zeros((B, H)) if h0 is None else h0
    c = np.zeros((B, H)) if c0 is None else c0
    hs = np.empty((B, T, H))
    cs = np.empty((B, T + 1, H))
    hprev = np.empty((B, T, H))
    gates = np.empty((B, T, 4 * H))
    cs[:, 0] = c
    xw = X @ W + b  # input projection for all steps at once
    for t in range(T):
        hprev[:, t] = h
        z = xw[:, t] + h @ U
        a = np.empty_like(z)
        a[:, :2 * H] = sigmoid(z[:, :2 * H])
        a[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
        a[:, 3 * H:] = sigmoid(z[:, 3 * H:])
        c = a[:, H:2 * H] * c + a[:, :H] * a[:, 2 * H:3 * H]
        h = a[:, 3 * H:] * np.tanh(c)
        gates[:, t] = a
        cs[:, t + 1] = c
        hs[:, t] = h
    cache = (X, W, U, hprev, cs, gates)
    return hs, h, cache


def lstm_backward(dHs, cache):
    """Backpropagation through time for one layer.

    ``dHs`` is the loss gradient w.r.t. every hidden output ``(batch, T, H)``.
    Returns ``(dX, dW, dU, db)``.
    """
    X, W, U, hprev, cs, gates = cache
    B, T, H = dHs.shape
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * H)
    dX = np.empty_like(X)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    dz = np.empty((B, 4 * H))
    for t in reversed(range(T)):
        a = gates[:, t]
        i, f, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
        tc = np.tanh(cs[:, t + 1])
        dh = dHs[:, t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc * cs[:, t] * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dW += X[:, t].T @ dz
        dU += hprev[:, t].T @ dz
        db += dz.sum(axis=0)
        dX[:, t] = dz @ W.T
        dh_next = dz @ U.T
    return dX, dW, dU, db


def head_forward(hidden, Wfc, bfc, Wout, bout):
    """linear -> ReLU -> linear on the final hidden state."""
    if hidden.shape[-1] != Wfc.shape[0]:
        raise DimensionError(f"head expects {Wfc.shape[0]} hidden units, got {hidden.shape[-1]}")
    pre = hidden @ Wfc + bfc
    act = np.maximum(pre, 0.0)
    return act @ Wout + bout, (hidden, pre, act)


def head_backward(dy, cache, Wfc, Wout):
    hidden, pre, act = cache
    dWout = act.T @ dy
    dbout = dy.sum(axis=0)
    dact = dy @ Wout.T
    dpre = dact * (pre > 0)
    dWfc = hidden.T @ dpre
    dbfc = dpre.sum(axis=0)
    dhidden = dpre @ Wfc.T
    return dhidden, dWfc, dbfc, dWout, dbout


def forward(params: Params, X, n_layers: int | None = None):
    """Full network forward pass; returns ``(predictions, cache)``."""
    if n_layers is None:
        n_layers = sum(1 for k in params if k.endswith(".U"))
    caches = []
    h_seq = X
    for k in range(n_layers):
        h_seq, _, c = lstm_forward(params[f"lstm{k}.W"], params[f"lstm{k}.U"], params[f"lstm{k}.b"], h_seq)
        caches.append(c)
    y, hc = head_forward(h_seq[:, -1], params["fc.W"], params["fc.b"], params["out.W"], params["out.b"])
    return y, (caches, hc, h_seq.shape)


def predict(params: Params, X, batch_size: int = 4096) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        return np.empty((0, params["out.b"].shape[0]))
    return np.concatenate([forward(params, X[i:i + batch_size])[0]
                           for i in range(0, len(X), batch_size)])


def mse_loss(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def backward(params: Params, cache, dy) -> Params:
    """Gradients of a loss w.r.t. every parameter given ``dy = dL/dpred``."""
    caches, hc, (B, T, H) = cache
    grads: Params = {}
    dhidden, grads["fc.W"], grads["fc.b"], grads["out.W"], grads["out.b"] = head_backward(
        dy, hc, params["fc.W"], params["out.W"])
    dHs = np.zeros((B, T, H))
    dHs[:, -1] = dhidden
    for k in reversed(range(len(caches))):
        dHs, grads[f"lstm{k}.W"], grads[f"lstm{k}.U"], grads[f"lstm{k}.b"] = lstm_backward(dHs, caches[k])
    return grads


def loss_and_grads(params: Params, X, Y, batch_id=None) -> tuple[float, Params]:
    """MSE of the network on ``(X, Y)`` and its exact gradients (BPTT)."""
    Y = np.asarray(Y, dtype=np.float64)
    pred, cache = forward(params, X)
    if pred.shape != Y.shape:
        raise DimensionError(f"targets {Y.shape} do not match predictions {pred.shape}")
    diff = pred - Y
    loss = float(np.mean(diff * diff))
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss on batch {batch_id}")
    return loss, backward(params, cache, 2.0 * diff / diff.size)
