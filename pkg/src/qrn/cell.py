"""The QRN unit.

A layer reads context vectors ``X`` (T x d) and local queries ``Q``
(T x d) and produces reduced queries ``H``. Every function accepts extra
leading batch axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from . import scan as pscan
from .autograd import Parameter, ShapeError, Tensor


class ConfigurationError(ValueError):
    pass


@dataclass
class QrnConfig:
    layers: int = 2
    hidden_size: int = 50
    use_reset_gate: bool = True
    vector_gates: bool = False
    bidirectional: bool = True
    forget_bias: float = 2.5
    tie_weights_across_layers: bool = True
    head: str = "qa"
    use_match: bool = False
    query_decoder: bool = False
    reconstruction_weight: float = 1.0

    def __post_init__(self):
        if self.layers < 1 or self.hidden_size < 1:
            raise ConfigurationError("layers and hidden_size must be >= 1")
        if self.head not in ("qa", "dialog"):
            raise ConfigurationError(f"unknown head {self.head!r}")

    @property
    def gate_rows(self) -> int:
        return self.hidden_size if self.vector_gates else 1


@dataclass
class QrnParams:
    W_z: Parameter
    b_z: Parameter
    W_h: Parameter
    b_h: Parameter
    W_r: Parameter | None = None
    b_r: Parameter | None = None

    def __post_init__(self):
        d = self.W_h.shape[0]
        rows = self.W_z.shape[0]
        if self.W_z.shape != (rows, d) or rows not in (1, d) or self.W_h.shape != (d, 2 * d):
            raise ShapeError(f"QrnParams: inconsistent shapes W_z={self.W_z.shape} W_h={self.W_h.shape}")
        if self.W_r is not None and self.W_r.shape != self.W_z.shape:
            raise ShapeError(f"QrnParams: W_r {self.W_r.shape} must match W_z {self.W_z.shape}")

    @property
    def hidden_size(self) -> int:
        return self.W_h.shape[0]

    @property
    def has_reset(self) -> bool:
        return self.W_r is not None

    def parameters(self) -> list[Parameter]:
        return [p for p in (self.W_z, self.b_z, self.W_h, self.b_h, self.W_r, self.b_r) if p is not None]


def glorot_uniform(rng: np.random.Generator, shape: tuple, dtype) -> np.ndarray:
    fan_out, fan_in = shape
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape).astype(dtype)


def init_params(config: QrnConfig, rng: np.random.Generator, dtype=np.float32,
                prefix: str = "qrn") -> QrnParams:
    d, g = config.hidden_size, config.gate_rows
    params = QrnParams(
        W_z=Parameter(f"{prefix}.W_z", glorot_uniform(rng, (g, d), dtype)),
        b_z=Parameter(f"{prefix}.b_z", np.full(g, config.forget_bias, dtype=dtype)),
        W_h=Parameter(f"{prefix}.W_h", glorot_uniform(rng, (d, 2 * d), dtype)),
        b_h=Parameter(f"{prefix}.b_h", np.zeros(d, dtype=dtype)),
    )
    if config.use_reset_gate:
        params.W_r = Parameter(f"{prefix}.W_r", glorot_uniform(rng, (g, d), dtype))
        params.b_r = Parameter(f"{prefix}.b_r", np.zeros(g, dtype=dtype))
    return params


def _check_pair(name: str, x: Tensor, q: Tensor, d: int):
    if x.shape != q.shape or x.shape[-1] != d:
        raise ShapeError(f"{name}: expected matching [..., {d}] inputs, got {x.shape} and {q.shape}")


def update_gate(x_t, q_t, params: QrnParams) -> Tensor:
    x_t, q_t = ag.as_tensor(x_t), ag.as_tensor(q_t)
    _check_pair("update_gate", x_t, q_t, params.hidden_size)
    return ag.sigmoid(ag.linear(x_t * q_t, params.W_z, params.b_z))


def reset_gate(x_t, q_t, params: QrnParams) -> Tensor:
    if not params.has_reset:
        raise ConfigurationError("reset_gate: parameters were built without a reset gate")
    x_t, q_t = ag.as_tensor(x_t), ag.as_tensor(q_t)
    _check_pair("reset_gate", x_t, q_t, params.hidden_size)
    return ag.sigmoid(ag.linear(x_t * q_t, params.W_r, params.b_r))


def reduce(x_t, q_t, params: QrnParams) -> Tensor:
    """Candidate reduced query tanh(W_h [x; q] + b_h)."""
    x_t, q_t = ag.as_tensor(x_t), ag.as_tensor(q_t)
    _check_pair("reduce", x_t, q_t, params.hidden_size)
    return ag.tanh(ag.linear(ag.concat([x_t, q_t], axis=-1), params.W_h, params.b_h))


@dataclass
class StepTrace:
    z: np.ndarray
    r: np.ndarray | None


def step(h_prev, x_t, q_t, params: QrnParams, is_last_layer: bool = False,
         mask=None) -> tuple[Tensor, StepTrace]:
    """One recurrence step. ``h_prev`` may be None for the h_0 = 0 base case.

    ``mask`` (1 keeps, 0 skips) forces the update gate to zero on padded
    positions so they leave the state untouched.
    """
    x_t, q_t = ag.as_tensor(x_t), ag.as_tensor(q_t)
    z = update_gate(x_t, q_t, params)
    if mask is not None:
        z = z * mask
    cand = reduce(x_t, q_t, params)
    r = None
    if params.has_reset and not is_last_layer:
        r = reset_gate(x_t, q_t, params)
        cand = r * cand
    if h_prev is None:
        h = z * cand
    else:
        h_prev = ag.as_tensor(h_prev)
        if h_prev.shape != cand.shape:
            raise ShapeError(f"step: h_prev {h_prev.shape} does not match candidate {cand.shape}")
        h = z * cand + (1.0 - z) * h_prev
    return h, StepTrace(z.data, None if r is None else r.data)


def _layer(X, Q, params, direction, mode, is_last_layer, mask):
    X, Q = ag.as_tensor(X), ag.as_tensor(Q)
    if X.shape != Q.shape or X.ndim < 2 or X.shape[-1] != params.hidden_size:
        raise ShapeError(f"run_layer: X {X.shape} and Q {Q.shape} must both be [..., T, {params.hidden_size}]")
    if direction not in ("forward", "backward"):
        raise ValueError(f"run_layer: unknown direction {direction!r}")
    if mode not in ("sequential", "parallel"):
        raise ValueError(f"run_layer: unknown mode {mode!r}")
    backward = direction == "backward"
    if backward:
        X, Q = ag.flip(X, -2), ag.flip(Q, -2)
        if mask is not None:
            mask = np.flip(mask, -2)
    T = X.shape[-2]

    if mode == "sequential":
        h = None
        hs, zs, rs = [], [], []
        for t in range(T):
            m = None if mask is None else mask[..., t, :]
            h, tr = step(h, X[..., t, :], Q[..., t, :], params, is_last_layer, m)
            hs.append(h)
            zs.append(tr.z)
            rs.append(tr.r)
        H = ag.stack(hs, axis=-2)
        Zd = np.stack(zs, axis=-2)
        Rd = None if rs[0] is None else np.stack(rs, axis=-2)
    else:
        Z = update_gate(X, Q, params)
        if mask is not None:
            Z = Z * mask
        cand = reduce(X, Q, params)
        R = None
        if params.has_reset and not is_last_layer:
            R = reset_gate(X, Q, params)
        H = pscan.scan(Z, cand, R)
        Zd = Z.data
        Rd = None if R is None else R.data

    if backward:
        H = ag.flip(H, -2)
        Zd = np.flip(Zd, -2)
        Rd = None if Rd is None else np.flip(Rd, -2)
    return H, Zd, Rd


def run_layer(X, Q, params: QrnParams, direction: str = "forward", mode: str = "parallel",
              is_last_layer: bool = False, mask=None) -> Tensor:
    return _layer(X, Q, params, direction, mode, is_last_layer, mask)[0]


@dataclass
class GateTrace:
    """Gate values and reduced queries recorded during a stacked forward pass.

    ``layers[k][direction]`` holds ``{"z": array, "r": array | None}`` with
    arrays of shape (..., T, gate_rows); ``reduced[k]`` is the layer's output.
    """
    layers: list[dict] = field(default_factory=list)
    reduced: list[np.ndarray] = field(default_factory=list)


def layer_params(params, k: int) -> QrnParams:
    return params if isinstance(params, QrnParams) else params[k]


def stack_forward(X, q, config: QrnConfig, params, mode: str = "parallel",
                  mask=None) -> tuple[Tensor, GateTrace]:
    """Run all layers and return the answer vector and the gate trace.

    ``params`` is a single :class:`QrnParams` when weights are tied, or a
    list with one entry per layer.
    """
    X, q = ag.as_tensor(X), ag.as_tensor(q)
    if q.shape != X.shape[:-2] + X.shape[-1:]:
        raise ShapeError(f"stack_forward: question {q.shape} does not match context {X.shape}")
    if not isinstance(params, QrnParams) and len(params) != config.layers:
        raise ConfigurationError("stack_forward: need one parameter set per layer when untied")
    Q = ag.reshape(q, q.shape[:-1] + (1, q.shape[-1])) + np.zeros(X.shape, dtype=X.dtype)
    trace = GateTrace()
    H = None
    for k in range(config.layers):
        p = layer_params(params, k)
        last = k == config.layers - 1
        Hf, zf, rf = _layer(X, Q, p, "forward", mode, last, mask)
        entry = {"forward": {"z": zf.astype(np.float32), "r": None if rf is None else rf.astype(np.float32)}}
        H = Hf
        if config.bidirectional and not last:
            Hb, zb, rb = _layer(X, Q, p, "backward", mode, last, mask)
            entry["backward"] = {"z": zb.astype(np.float32), "r": None if rb is None else rb.astype(np.float32)}
            H = Hf + Hb
        trace.layers.append(entry)
        trace.reduced.append(Hf.data.copy())
        Q = H
    y_hat = H[..., -1, :]
    return y_hat, trace
