"""Dense tensors with reverse-mode automatic differentiation.

A thread-local gradient tape records every differentiable operation in
execution order, which is by construction a valid topological order of the
computation graph.  ``backward`` on a scalar result walks that tape once in
reverse and accumulates gradients into every tensor that requires them.
Tensors are immutable after construction except for gradient accumulation,
so forward operations are pure and may run concurrently on distinct tapes.

There is no implicit broadcasting: elementwise operations demand equal
shapes, with plain Python scalars (and rank-0 tensors) as the only
exception.  Shape juggling is done through explicit ``reshape``,
``transpose``, ``concat`` and ``tile_new_axis`` operations so every
backward rule stays auditable.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, ContractError, DimensionError

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
_default_dtype = np.dtype(np.float64)


def set_default_dtype(dtype) -> None:
    """Set the dtype used by new tensors: float64 (tests) or float32 (speed)."""
    global _default_dtype
    dt = np.dtype(dtype)
    if dt not in _FLOAT_DTYPES:
        raise ConfigError(f"unsupported default dtype {dt}; use float32 or float64")
    _default_dtype = dt


def default_dtype() -> np.dtype:
    return _default_dtype


class Tensor:
    """n-dimensional real array, optionally participating in gradient taping.

    ``grad`` is allocated eagerly (zeros) for leaf tensors created with
    ``requires_grad=True``, so an unused parameter reports an all-zero
    gradient after any backward pass.  Intermediate results receive their
    gradient buffers lazily during the reverse sweep.
    """

    __slots__ = ("data", "requires_grad", "grad", "tape")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype or _default_dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self.tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def backward(self) -> None:
        backward(self)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; all graph building goes through the module functions.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class _TapeEntry:
    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs, output, backward_fn):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


_tls = threading.local()


def _tape_stack() -> list:
    stack = getattr(_tls, "stack", None)
    if stack is None:
        stack = []
        _tls.stack = stack
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of operations for one reverse pass.

    Confined to a single thread; entering the context makes it the active
    tape for operations executed on that thread.  A tape can be consumed by
    exactly one backward pass.
    """

    def __init__(self):
        self._entries: list[_TapeEntry] = []
        self._consumed = False

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def consumed(self) -> bool:
        return self._consumed

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        top = _tape_stack().pop()
        if top is not self:
            raise ContractError("tape context exited out of order")


def _record(inputs: tuple, out: Tensor, backward_fn) -> Tensor:
    tape = active_tape()
    if tape is not None and not tape._consumed and any(
        isinstance(t, Tensor) and t.requires_grad for t in inputs
    ):
        out.requires_grad = True
        out.tape = tape
        tape._entries.append(_TapeEntry(inputs, out, backward_fn))
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(tensor) into every requires_grad tensor on the tape.

    Gradients from multiple uses of the same tensor add up.  The tape is
    consumed: a second backward through it raises.
    """
    if loss.ndim != 0:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    tape = loss.tape
    if tape is None or tape._consumed:
        raise ContractError("backward requires a loss recorded on a live tape")
    loss.grad = np.ones_like(loss.data)
    for entry in reversed(tape._entries):
        out_grad = entry.output.grad
        if out_grad is None:
            continue
        for tensor, contrib in zip(entry.inputs, entry.backward_fn(out_grad)):
            if contrib is None or not isinstance(tensor, Tensor) or not tensor.requires_grad:
                continue
            if tensor.grad is None:
                tensor.grad = np.zeros_like(tensor.data)
            tensor.grad += contrib
    tape._consumed = True
    tape._entries.clear()


def zeros(shape, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype or _default_dtype), requires_grad=requires_grad)


def constant(data, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=False, dtype=dtype)


# ---------------------------------------------------------------------------
# Elementwise arithmetic.  Equal shapes required; Python scalars and rank-0
# tensors are the only broadcast exception.


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: operand shapes {a.shape} and {b.shape} differ")


def _binary_elementwise(op, a, b, forward, grad_a, grad_b):
    if not isinstance(b, Tensor):
        b_val = float(b)
        out = Tensor(forward(a.data, b_val))
        return _record((a,), out, lambda g, _ga=grad_a, _b=b_val, _a=a.data: (_ga(g, _a, _b),))
    if a.ndim != 0 and b.ndim != 0:
        _check_same_shape(op, a, b)
    out = Tensor(forward(a.data, b.data))

    def bw(g, _a=a.data, _b=b.data):
        ga = grad_a(g, _a, _b)
        gb = grad_b(g, _a, _b)
        if a.ndim == 0 and np.ndim(ga):
            ga = np.asarray(ga.sum())
        if b.ndim == 0 and np.ndim(gb):
            gb = np.asarray(gb.sum())
        return ga, gb

    return _record((a, b), out, bw)


def add(a: Tensor, b) -> Tensor:
    return _binary_elementwise(
        "add", a, b,
        lambda x, y: x + y,
        lambda g, x, y: g,
        lambda g, x, y: g,
    )


def sub(a: Tensor, b) -> Tensor:
    return _binary_elementwise(
        "sub", a, b,
        lambda x, y: x - y,
        lambda g, x, y: g,
        lambda g, x, y: -g,
    )


def mul(a: Tensor, b) -> Tensor:
    return _binary_elementwise(
        "mul", a, b,
        lambda x, y: x * y,
        lambda g, x, y: g * y,
        lambda g, x, y: g * x,
    )


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    return _record((a,), out, lambda g: (-g,))


def tanh(a: Tensor) -> Tensor:
    out = Tensor(np.tanh(a.data))
    return _record((a,), out, lambda g, _t=out.data: (g * (1.0 - _t * _t),))


def _sigmoid_stable(x: np.ndarray) -> np.ndarray:
    # Branch on sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    out = Tensor(_sigmoid_stable(np.asarray(a.data, dtype=a.data.dtype)))
    return _record((a,), out, lambda g, _s=out.data: (g * _s * (1.0 - _s),))


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))
    return _record((a,), out, lambda g, _x=a.data: (g * (_x > 0),))


# ---------------------------------------------------------------------------
# Linear algebra.


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner extents disagree for {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)

    def bw(g, _a=a.data, _b=b.data):
        return g @ _b.T, _a.T @ g

    return _record((a, b), out, bw)


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Stacked matrix product: (N,m,k) @ (N,k,n) -> (N,m,n)."""
    if a.ndim != 3 or b.ndim != 3:
        raise DimensionError(f"bmm needs rank-3 operands, got {a.shape} and {b.shape}")
    if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise DimensionError(f"bmm: incompatible shapes {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)

    def bw(g, _a=a.data, _b=b.data):
        return g @ _b.transpose(0, 2, 1), _a.transpose(0, 2, 1) @ g

    return _record((a, b), out, bw)


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(range(a.ndim))[::-1]
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = Tensor(np.transpose(a.data, axes))
    return _record((a,), out, lambda g, _inv=inv: (np.transpose(g, _inv),))


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(np.reshape(a.data, shape))
    return _record((a,), out, lambda g, _s=a.shape: (np.reshape(g, _s),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("concat of zero tensors")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def bw(g, _off=offsets, _axis=axis):
        return tuple(np.split(g, _off, axis=_axis))

    return _record(tuple(tensors), out, bw)


def tile_new_axis(a: Tensor, n: int, axis: int) -> Tensor:
    """Insert a new axis of extent ``n`` by repetition; backward sums it away."""
    out = Tensor(np.repeat(np.expand_dims(a.data, axis), n, axis=axis))
    return _record((a,), out, lambda g, _axis=axis: (g.sum(axis=_axis),))


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(np.asarray(a.data.sum(), dtype=a.data.dtype))
    return _record((a,), out, lambda g, _s=a.shape: (np.full(_s, g, dtype=g.dtype),))


def mean_all(a: Tensor) -> Tensor:
    n = a.size
    out = Tensor(np.asarray(a.data.mean(), dtype=a.data.dtype))
    return _record((a,), out, lambda g, _s=a.shape, _n=n: (np.full(_s, g / _n, dtype=g.dtype),))


# ---------------------------------------------------------------------------
# Neural-network specific operations.


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along ``axis``; rows sum to 1."""
    if not -a.ndim <= axis < a.ndim:
        raise DimensionError(f"softmax: axis {axis} invalid for shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = Tensor(e / e.sum(axis=axis, keepdims=True))

    def bw(g, _y=out.data, _axis=axis):
        inner = (g * _y).sum(axis=_axis, keepdims=True)
        return (_y * (g - inner),)

    return _record((a,), out, bw)


def masked_fill(a: Tensor, keep: np.ndarray, value: float) -> Tensor:
    """Replace entries where ``keep`` is False by ``value`` (a constant).

    The replacement is by substitution, not addition, so the output at
    masked positions is bitwise independent of the input there.
    """
    keep = np.asarray(keep, dtype=bool)
    if keep.shape != a.shape:
        raise DimensionError(f"masked_fill: mask shape {keep.shape} != data shape {a.shape}")
    out = Tensor(np.where(keep, a.data, value))
    return _record((a,), out, lambda g, _k=keep: (g * _k,))


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather: table (V,d), ids any integer shape -> shape ids.shape + (d,)."""
    ids = np.asarray(ids)
    if table.ndim != 2:
        raise DimensionError(f"embedding table must be rank 2, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(
            f"embedding: id out of range [0, {table.shape[0]}) in lookup"
        )
    out = Tensor(table.data[ids])

    def bw(g, _ids=ids, _vshape=table.shape):
        gt = np.zeros(_vshape, dtype=g.dtype)
        np.add.at(gt, _ids.reshape(-1), g.reshape(-1, _vshape[1]))
        return (gt,)

    return _record((table,), out, bw)


def cross_entropy(logits: Tensor, targets: np.ndarray, mask: np.ndarray | None = None) -> Tensor:
    """Mean negative log-softmax probability of targets over unmasked rows.

    logits: (N, V); targets: (N,) integer ids; mask: (N,) booleans marking
    rows that contribute (None means all rows).
    """
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy expects (N, V) logits, got {logits.shape}")
    n, v = logits.shape
    targets = np.asarray(targets)
    if targets.shape != (n,):
        raise DimensionError(f"cross_entropy: targets shape {targets.shape} != ({n},)")
    if targets.size and (targets.min() < 0 or targets.max() >= v):
        raise IndexError(f"cross_entropy: target id out of vocabulary [0, {v})")
    if mask is None:
        mask = np.ones(n, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise ContractError("cross_entropy: mask excludes every position")

    x = logits.data
    m = x.max(axis=1, keepdims=True)
    z = x - m
    lse = np.log(np.exp(z).sum(axis=1)) + m[:, 0]
    nll = lse - x[np.arange(n), targets]
    out = Tensor(np.asarray((nll * mask).sum() / count, dtype=x.dtype))

    def bw(g, _z=z, _t=targets, _m=mask, _c=count):
        p = np.exp(_z)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(len(_t)), _t] -= 1.0
        p *= (float(g) / _c) * _m[:, None]
        return (p,)

    return _record((logits,), out, bw)


def dropout(a: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero with probability ``rate`` and scale survivors
    by 1/(1-rate) during training; identity at inference."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    if rng is None:
        raise ConfigError("dropout in training mode needs an rng")
    scale = 1.0 / (1.0 - rate)
    keep = rng.random(a.shape) >= rate
    out = Tensor(a.data * keep * scale)
    return _record((a,), out, lambda g, _k=keep, _s=scale: (g * _k * _s,))


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply per-feature gain and bias."""
    d = a.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(
            f"layer_norm: gain/bias shapes {gain.shape}/{bias.shape} do not match feature size {d}"
        )
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gain.data + bias.data)
    lead = tuple(range(a.ndim - 1))

    def bw(g, _xhat=xhat, _inv=inv, _gain=gain.data, _lead=lead):
        dxhat = g * _gain
        dx = _inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - _xhat * (dxhat * _xhat).mean(axis=-1, keepdims=True)
        )
        dgain = (g * _xhat).sum(axis=_lead)
        dbias = g.sum(axis=_lead)
        return dx, dgain, dbias

    return _record((a, gain, bias), out, bw)


def log_softmax_rows(x: np.ndarray) -> np.ndarray:
    """Plain-array stable log-softmax over the last axis (no taping)."""
    m = x.max(axis=-1, keepdims=True)
    z = x - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
