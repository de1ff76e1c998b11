"""Dense tensors with define-by-run reverse-mode differentiation.

Every operation the QRN model needs lives here: elementwise arithmetic,
batched matrix products, the usual nonlinearities, reductions, reshapes,
and an embedding lookup. Operations executed while a :class:`Tape` is
active are recorded on it; :func:`backward` replays the tape in reverse.

Broadcasting follows numpy rules for the elementwise binary operations,
with gradients summed back over broadcast axes.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

LOG_FLOOR = 1e-8


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


class ContractError(RuntimeError):
    pass


class DeterminismError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Callable | None = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op})"

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __truediv__ = lambda self, other: div(self, other)
    __neg__ = lambda self: neg(self)
    __matmul__ = lambda self, other: matmul(self, other)
    __getitem__ = lambda self, idx: getitem(self, idx)

    @property
    def T(self):
        return transpose(self)


class Parameter(Tensor):
    """A trainable tensor with a gradient buffer and AdaGrad accumulator."""

    __slots__ = ("name", "accumulator")

    def __init__(self, name: str, value, dtype=None):
        super().__init__(np.array(value, dtype=dtype), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)
        self.accumulator = np.zeros_like(self.data)

    @property
    def value(self) -> np.ndarray:
        return self.data

    @property
    def gradient(self) -> np.ndarray:
        return self.grad

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; operations on tensors that require gradients
    are appended while it is active.
    """

    _stack: list["Tape"] = []

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self):
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc):
        Tape._stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    @classmethod
    def active(cls) -> "Tape | None":
        return cls._stack[-1] if cls._stack else None


@contextlib.contextmanager
def no_tape():
    saved = Tape._stack
    Tape._stack = []
    try:
        yield
    finally:
        Tape._stack = saved


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _record(out_data, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    out = Tensor(out_data)
    out.op = op
    tape = Tape.active()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        tape.nodes.append(out)
    return out


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.dtype, copy=True)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_check(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# -- elementwise binary ----------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_check("add", a, b)

    def bw(out):
        _accumulate(a, _unbroadcast(out.grad, a.shape))
        _accumulate(b, _unbroadcast(out.grad, b.shape))

    return _record(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_check("sub", a, b)

    def bw(out):
        _accumulate(a, _unbroadcast(out.grad, a.shape))
        _accumulate(b, _unbroadcast(-out.grad, b.shape))

    return _record(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_check("mul", a, b)

    def bw(out):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(out.grad * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(out.grad * a.data, b.shape))

    return _record(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_check("div", a, b)

    def bw(out):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(out.grad / b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-out.grad * a.data / (b.data * b.data), b.shape))

    return _record(a.data / b.data, (a, b), bw, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _record(-a.data, (a,), lambda out: _accumulate(a, -out.grad), "neg")


def _pair(a, b):
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


# -- matrix products -------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 1:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    vec = b.ndim == 1
    bd = b.data[:, None] if vec else b.data
    if a.shape[-1] != bd.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        out_data = np.matmul(a.data, bd)
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None
    if vec:
        out_data = out_data[..., 0]

    def bw(out):
        g = out.grad[..., None] if vec else out.grad
        if a.requires_grad:
            _accumulate(a, _unbroadcast(np.matmul(g, np.swapaxes(bd, -1, -2)), a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            gb = _unbroadcast(gb, bd.shape)
            _accumulate(b, gb[:, 0] if vec else gb)

    return _record(out_data, (a, b), bw, "matmul")


def linear(x, W, b=None) -> Tensor:
    """x @ W.T + b over the trailing axis of x; W has shape [out, in]."""
    x = as_tensor(x)
    if x.shape[-1] != W.shape[-1]:
        raise ShapeError(f"linear: incompatible shapes {x.shape} and {W.shape}")
    lead = x.shape[:-1]
    flat = reshape(x, (-1, x.shape[-1])) if x.ndim != 2 else x
    y = matmul(flat, transpose(W))
    if b is not None:
        y = add(y, b)
    if x.ndim != 2:
        y = reshape(y, lead + (W.shape[0],))
    return y


# -- elementwise unary -----------------------------------------------------

def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = 0.5 * (1.0 + np.tanh(0.5 * a.data))

    def bw(out):
        _accumulate(a, out.grad * s * (1.0 - s))

    return _record(s, (a,), bw, "sigmoid")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    t = np.tanh(a.data)

    def bw(out):
        _accumulate(a, out.grad * (1.0 - t * t))

    return _record(t, (a,), bw, "tanh")


def exp(a) -> Tensor:
    a = as_tensor(a)
    e = np.exp(a.data)
    return _record(e, (a,), lambda out: _accumulate(a, out.grad * e), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError(f"log: non-positive input (min {a.data.min()!r})")
    return _record(np.log(a.data), (a,), lambda out: _accumulate(a, out.grad / a.data), "log")


def clamp_min(a, floor: float) -> Tensor:
    a = as_tensor(a)
    keep = a.data >= floor
    out_data = np.where(keep, a.data, np.asarray(floor, dtype=a.dtype))
    return _record(out_data, (a,), lambda out: _accumulate(a, out.grad * keep), "clamp_min")


def safe_log(a) -> Tensor:
    return log(clamp_min(a, LOG_FLOOR))


# -- reductions and normalisation -----------------------------------------

def sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out_data = np.sum(a.data, axis=axis, keepdims=keepdims)

    def bw(out):
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape))

    return _record(out_data, (a,), bw, "sum")


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    return mul(sum(a, axis=axis), 1.0 / n)


def cumsum(a, axis: int) -> Tensor:
    """Running sum; along axis -2 this equals left-multiplying by a lower
    triangular matrix of ones."""
    a = as_tensor(a)

    def bw(out):
        g = np.flip(np.cumsum(np.flip(out.grad, axis), axis=axis), axis)
        _accumulate(a, g)

    return _record(np.cumsum(a.data, axis=axis), (a,), bw, "cumsum")


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def bw(out):
        g = out.grad
        _accumulate(a, p * (g - (g * p).sum(axis=axis, keepdims=True)))

    return _record(p, (a,), bw, "softmax")


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out_data = z - lse

    def bw(out):
        g = out.grad
        p = np.exp(out_data)
        _accumulate(a, g - p * g.sum(axis=axis, keepdims=True))

    return _record(out_data, (a,), bw, "log_softmax")


# -- shape manipulation ----------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out_data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {shape}") from None
    return _record(out_data, (a,), lambda out: _accumulate(a, out.grad.reshape(a.shape)), "reshape")


def transpose(a, axes=None) -> Tensor:
    """Swap the last two axes, or permute by ``axes``."""
    a = as_tensor(a)
    if axes is None:
        if a.ndim < 2:
            return a
        axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
    inv = np.argsort(axes)
    return _record(np.transpose(a.data, axes), (a,),
                   lambda out: _accumulate(a, np.transpose(out.grad, inv)), "transpose")


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)

    items = idx if isinstance(idx, tuple) else (idx,)
    basic = all(i is None or i is Ellipsis or isinstance(i, (int, slice)) for i in items)

    def bw(out):
        if not a.requires_grad:
            return
        g = np.zeros_like(a.data)
        if basic:
            g[idx] = out.grad
        else:
            np.add.at(g, idx, out.grad)
        _accumulate(a, g)

    return _record(a.data[idx], (a,), bw, "getitem")


def flip(a, axis: int) -> Tensor:
    a = as_tensor(a)
    return _record(np.flip(a.data, axis), (a,),
                   lambda out: _accumulate(a, np.flip(out.grad, axis)), "flip")


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out_data = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError("concat: incompatible shapes " + ", ".join(str(t.shape) for t in ts)) from None
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def bw(out):
        for t, g in zip(ts, np.split(out.grad, sizes, axis=axis)):
            _accumulate(t, g)

    return _record(out_data, ts, bw, "concat")


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out_data = np.stack([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError("stack: incompatible shapes " + ", ".join(str(t.shape) for t in ts)) from None

    def bw(out):
        for i, t in enumerate(ts):
            _accumulate(t, np.take(out.grad, i, axis=axis))

    return _record(out_data, ts, bw, "stack")


def tril(a, k: int = 0) -> Tensor:
    """Zero everything above the k-th diagonal of the last two axes."""
    a = as_tensor(a)
    n, m = a.shape[-2:]
    mask = np.tri(n, m, k, dtype=a.dtype)
    return _record(a.data * mask, (a,), lambda out: _accumulate(a, out.grad * mask), "tril")


def embed(A, ids) -> Tensor:
    """Look up columns of a [d x V] embedding matrix; returns ids.shape + (d,)."""
    A = as_tensor(A)
    ids = np.asarray(ids)
    if A.ndim != 2:
        raise ShapeError(f"embed: embedding must be 2-D, got {A.shape}")
    V = A.shape[1]
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        raise ShapeError(f"embed: index out of range for embedding {A.shape}")

    def bw(out):
        flat, rows = ids.reshape(-1), out.grad.reshape(-1, A.shape[0])
        if flat.size * V <= 1 << 24:
            # a one-hot product is much faster than np.add.at at these sizes
            onehot = np.zeros((V, flat.size), dtype=A.dtype)
            onehot[flat, np.arange(flat.size)] = 1.0
            _accumulate(A, (onehot @ rows).T)
            return
        g = np.zeros((V, A.shape[0]), dtype=A.dtype)
        np.add.at(g, flat, rows)
        _accumulate(A, g.T)

    return _record(A.data.T[ids], (A,), bw, "embed")


# -- differentiation --------------------------------------------------------

def backward(tape: Tape, loss: Tensor, params: Sequence[Parameter] = ()):
    """Populate ``.grad`` of every parameter reachable from ``loss``.

    Parameters listed in ``params`` are zeroed first so unreachable ones end
    with a zero gradient. Gradients accumulate into parameters that are not
    listed.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    for p in params:
        p.zero_grad()
    for node in tape.nodes:
        node.grad = None
    if not loss.requires_grad:
        return
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node.grad is not None and node._backward is not None:
            node._backward(node)
    # Free interior buffers; parameters keep theirs.
    for node in tape.nodes:
        node.grad = None


def check_gradients(closure: Callable[[], Tensor], params: Sequence[Parameter],
                    step: float = 1e-5, tolerance: float = 1e-4,
                    floor: float = 1e-6) -> dict:
    """Compare reverse-mode gradients with central finite differences.

    Returns ``{name: worst relative error}``; the relative error of one entry
    is ``|g - n| / max(|g|, |n|, floor)``. ``tolerance`` is only used to fill
    the ``passed`` entry of the report.
    """
    with no_tape():
        f0 = closure().data.copy()
        f1 = closure().data.copy()
    if not np.array_equal(f0, f1):
        raise DeterminismError("closure returned different values for identical parameters")

    with Tape() as tape:
        loss = closure()
    backward(tape, loss, params)
    analytic = {p.name: p.grad.copy() for p in params}

    report = {}
    with no_tape():
        for p in params:
            flat = p.data.reshape(-1)
            num = np.zeros(flat.size)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                fp = float(closure().data)
                flat[i] = orig - step
                fm = float(closure().data)
                flat[i] = orig
                num[i] = (fp - fm) / (2 * step)
            ana = analytic[p.name].reshape(-1)
            denom = np.maximum(np.maximum(np.abs(ana), np.abs(num)), floor)
            report[p.name] = float(np.max(np.abs(ana - num) / denom)) if flat.size else 0.0
    report_passed = all(v < tolerance for v in report.values())
    return {"errors": report, "passed": report_passed}
