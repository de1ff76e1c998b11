"""Closed-form, time-parallel evaluation of the gated recurrence

    h_t = z_t * u_t + (1 - z_t) * h_{t-1},   h_0 = 0,

where ``u_t`` is the (optionally reset-gated) candidate. Unrolling gives
``h_t = sum_i [prod_{j=i+1..t} (1 - z_j)] z_i u_i``, i.e. one product of a
lower-triangular decay matrix with the gated candidates. The decay matrix
is built in log space and masked after exponentiation, so no infinities
enter the arithmetic.
"""
from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import DomainError, ShapeError, Tensor


def build_decay_matrix(z) -> Tensor:
    """Decay matrix for gates ``z`` of shape ``(..., T)``.

    Entry ``(t, i)`` is ``prod_{j=i+1..t} (1 - z_j)`` for ``i <= t`` and 0
    above the diagonal.
    """
    z = ag.as_tensor(z)
    if z.ndim < 1:
        raise ShapeError(f"build_decay_matrix: gates must have a time axis, got {z.shape}")
    if np.any(z.data < 0) or np.any(z.data > 1):
        raise DomainError("build_decay_matrix: gate values must lie in [0, 1]")
    T = z.shape[-1]
    dtype = z.dtype
    # b = [0, log(1 - z_2), ..., log(1 - z_T)]
    first = np.ones(T, dtype=dtype)
    first[0] = 0.0
    b = ag.safe_log(1.0 - z) * first
    # B tiles b across columns; B o L' keeps b_t at (t, i) for i < t.
    B = ag.reshape(b, z.shape + (1,)) * np.tri(T, T, -1, dtype=dtype)
    # L @ (B o L') as a running sum down the rows.
    S = ag.cumsum(B, axis=-2)
    return ag.exp(S) * np.tri(T, T, 0, dtype=dtype)


def _check(Z: Tensor, Htilde: Tensor, R: Tensor | None, rows: int | None, name: str):
    if Z.ndim < 2 or Htilde.ndim < 2 or Z.shape[:-1] != Htilde.shape[:-1]:
        raise ShapeError(f"{name}: incompatible shapes Z={Z.shape} Htilde={Htilde.shape}")
    want = Htilde.shape[-1] if rows is None else rows
    if Z.shape[-1] != want:
        raise ShapeError(f"{name}: gate width {Z.shape[-1]} does not match {want}")
    if R is not None and R.shape != Z.shape:
        raise ShapeError(f"{name}: reset shape {R.shape} differs from gate shape {Z.shape}")


def scan_scalar(Z, Htilde, R=None) -> Tensor:
    """Scalar-gate scan. ``Z`` is ``(..., T, 1)``, ``Htilde`` ``(..., T, d)``."""
    Z, Htilde = ag.as_tensor(Z), ag.as_tensor(Htilde)
    R = None if R is None else ag.as_tensor(R)
    _check(Z, Htilde, R, 1, "scan_scalar")
    D = build_decay_matrix(Z[..., 0])
    U = Z * Htilde if R is None else (Z * R) * Htilde
    return ag.matmul(D, U)


def scan_vector(Z, Htilde, R=None) -> Tensor:
    """Vector-gate scan: one independent scalar scan per hidden dimension,
    batched over a ``(..., d, T, T)`` stack of decay matrices."""
    Z, Htilde = ag.as_tensor(Z), ag.as_tensor(Htilde)
    R = None if R is None else ag.as_tensor(R)
    _check(Z, Htilde, R, None, "scan_vector")
    nd = Z.ndim
    swap = tuple(range(nd - 2)) + (nd - 1, nd - 2)
    D = build_decay_matrix(ag.transpose(Z, swap))  # (..., d, T, T)
    U = Z * Htilde if R is None else (Z * R) * Htilde
    Ut = ag.transpose(U, swap)  # (..., d, T)
    H = ag.matmul(D, ag.reshape(Ut, Ut.shape + (1,)))
    return ag.transpose(ag.reshape(H, Ut.shape), swap)


def scan(Z, Htilde, R=None) -> Tensor:
    Z = ag.as_tensor(Z)
    if Z.shape[-1] == 1:
        return scan_scalar(Z, Htilde, R)
    return scan_vector(Z, Htilde, R)


def sequential_scan(Z, Htilde, R=None) -> Tensor:
    """Step-by-step evaluation of the same recurrence (differentiable)."""
    Z, Htilde = ag.as_tensor(Z), ag.as_tensor(Htilde)
    R = None if R is None else ag.as_tensor(R)
    _check(Z, Htilde, R, Z.shape[-1] if Z.shape[-1] == 1 else None, "sequential_scan")
    T = Z.shape[-2]
    h = None
    out = []
    for t in range(T):
        z = Z[..., t, :]
        u = Htilde[..., t, :]
        if R is not None:
            u = R[..., t, :] * u
        h = z * u if h is None else z * u + (1.0 - z) * h
        out.append(h)
    return ag.stack(out, axis=-2)


# -- benchmark --------------------------------------------------------------

class EquivalenceError(AssertionError):
    pass


@dataclass
class BenchReport:
    T: int
    d: int
    batch: int
    seq_ms: float
    par_ms: float
    max_abs_diff: float

    @property
    def ratio(self) -> float:
        return self.seq_ms / self.par_ms if self.par_ms > 0 else float("inf")

    def line(self) -> str:
        return (f"T={self.T} d={self.d} batch={self.batch} seq_ms={self.seq_ms:.4f} "
                f"par_ms={self.par_ms:.4f} ratio={self.ratio:.4f}")


def benchmark_scan(T: int, d: int, batch: int, repeats: int = 5, seed: int = 0,
                   vector_gates: bool = False, dtype=np.float32,
                   tolerance: float | None = None) -> BenchReport:
    """Time one QRN layer (gates, candidates, recurrence, and backward pass)
    evaluated sequentially and in parallel on identical random inputs.

    Both outputs are compared first; a mismatch raises
    :class:`EquivalenceError` before any timing is reported.
    """
    from .cell import QrnConfig, init_params, run_layer

    if min(T, d, batch, repeats) < 1:
        raise ValueError("benchmark_scan: T, d, batch and repeats must be positive")
    rng = np.random.default_rng(seed)
    cfg = QrnConfig(layers=1, hidden_size=d, use_reset_gate=True, vector_gates=vector_gates)
    params = init_params(cfg, rng, dtype=dtype)
    X = ag.Tensor(rng.normal(0, 1 / np.sqrt(d), (batch, T, d)).astype(dtype))
    Q = ag.Tensor(rng.normal(0, 1 / np.sqrt(d), (batch, T, d)).astype(dtype))
    plist = params.parameters()

    def run(mode):
        with ag.Tape() as tape:
            H = run_layer(X, Q, params, mode=mode)
            loss = ag.sum(H * H)
        ag.backward(tape, loss, plist)
        return H.data

    if tolerance is None:
        tolerance = 1e-9 if np.dtype(dtype) == np.float64 else 1e-4
    diff = float(np.max(np.abs(run("sequential") - run("parallel"))))
    if not diff < tolerance:
        raise EquivalenceError(f"parallel and sequential outputs differ by {diff:g}")

    def timed(mode):
        samples = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            run(mode)
            samples.append((time.perf_counter() - t0) * 1e3)
        return statistics.median(samples)

    seq_ms = timed("sequential")
    par_ms = timed("parallel")
    return BenchReport(T, d, batch, seq_ms, par_ms, diff)
