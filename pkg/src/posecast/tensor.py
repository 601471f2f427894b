"""Dense float64 tensors with tape-based reverse-mode differentiation.

Deliberately small: only the operations the motion models need, each with a
hand-written gradient rule. Forward execution records onto a process-wide
tape in define-by-run order; ``backward`` replays the tape once in reverse
and clears it. Everything is float64 so finite-difference checks are sharp.
"""

from __future__ import annotations

from collections import namedtuple

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "Tape",
    "TapeError",
    "tape",
    "no_grad",
    "backward",
    "binary_op",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "softmax",
    "layer_norm",
    "tanh",
    "gelu",
    "absolute",
    "concat",
    "dropout",
    "zero_grads",
]

_SQRT2 = float(np.sqrt(2.0))
_INV_SQRT_2PI = float(1.0 / np.sqrt(2.0 * np.pi))


class TapeError(RuntimeError):
    """Backward-pass misuse: empty tape, non-scalar loss, repeated replay."""


Record = namedtuple("Record", ["out", "inputs", "grad_fn"])


class Tape:
    """Ordered log of differentiable operations.

    Records are appended in execution order, so the list is already a
    topological order of the compute graph. ``backward`` consumes the log;
    calling it again without recording new work is an error.
    """

    def __init__(self):
        self.records = []

    def __len__(self):
        return len(self.records)

    def clear(self):
        self.records = []


_TAPE = Tape()
_GRAD_ENABLED = [True]


def tape():
    """The process-wide active tape."""
    return _TAPE


class no_grad:
    """Context manager that suspends tape recording (evaluation mode)."""

    def __enter__(self):
        self._prev = _GRAD_ENABLED[0]
        _GRAD_ENABLED[0] = False
        return self

    def __exit__(self, *exc):
        _GRAD_ENABLED[0] = self._prev
        return False


class Tensor:
    """Dense float64 array, optionally tracked for differentiation.

    ``grad`` is populated only on leaves (tensors the user created with
    ``requires_grad=True``); intermediates keep their adjoints inside the
    backward pass. Values are treated as immutable once produced; the one
    sanctioned exception is the optimizer updating leaf ``data`` in place.
    """

    __slots__ = ("data", "requires_grad", "grad", "op_output")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.op_output = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def __float__(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # arithmetic sugar; scalars and arrays are wrapped as constants
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes if axes else None)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, inputs, grad_fn):
    track = _GRAD_ENABLED[0] and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=track)
    if track:
        out.op_output = True
        _TAPE.records.append(Record(out, tuple(inputs), grad_fn))
    return out


def _unbroadcast(g, shape):
    """Sum an upstream gradient down to the shape it was broadcast from."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a, b, name):
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ValueError(
            f"{name}: shapes {a.data.shape} and {b.data.shape} "
            "are not broadcast-compatible"
        ) from None


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "add")

    def grad_fn(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape))

    return _result(a.data + b.data, (a, b), grad_fn)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "sub")

    def grad_fn(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape))

    return _result(a.data - b.data, (a, b), grad_fn)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "mul")

    def grad_fn(g):
        ga = _unbroadcast(g * b.data, a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.data.shape) if b.requires_grad else None
        return (ga, gb)

    return _result(a.data * b.data, (a, b), grad_fn)


def div(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "div")
    if np.any(b.data == 0.0):
        raise ValueError("div: divisor contains zero entries")

    def grad_fn(g):
        ga = _unbroadcast(g / b.data, a.data.shape) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)
        return (ga, gb)

    return _result(a.data / b.data, (a, b), grad_fn)


_BINARY = {"add": add, "sub": sub, "mul": mul, "div": div}


def binary_op(a, b, kind):
    """Dispatch elementwise arithmetic by name; kind in {add, sub, mul, div}."""
    try:
        op = _BINARY[kind]
    except KeyError:
        raise ValueError(f"unknown binary op kind {kind!r}") from None
    return op(a, b)


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError(
            f"matmul: operands must be at least 2-D, got {a.data.shape} @ {b.data.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(
            f"matmul: inner dimensions differ: {a.data.shape} @ {b.data.shape}"
        )
    if a.data.shape[:-2] != b.data.shape[:-2]:
        raise ValueError(
            f"matmul: batch dimensions differ: {a.data.shape} @ {b.data.shape}"
        )

    def grad_fn(g):
        ga = g @ np.swapaxes(b.data, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(a.data, -1, -2) @ g if b.requires_grad else None
        return (ga, gb)

    return _result(a.data @ b.data, (a, b), grad_fn)


def softmax(a, axis=-1):
    a = _as_tensor(a)
    if not -a.data.ndim <= axis < a.data.ndim:
        raise ValueError(f"softmax: axis {axis} invalid for shape {a.data.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return ((g - dot) * y,)

    return _result(y, (a,), grad_fn)


def layer_norm(a, gain, bias, eps=1e-5):
    """Normalize the last axis to mean 0 / variance 1, then scale and shift.

    The variance is floored at ``eps`` rather than inflated by it, so rows
    with real variance are normalized exactly and constant rows map to zero.
    """
    if eps <= 0:
        raise ValueError("layer_norm: eps must be positive")
    a, gain, bias = _as_tensor(a), _as_tensor(gain), _as_tensor(bias)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    scale = 1.0 / np.sqrt(np.maximum(var, eps))
    xhat = centered * scale
    out = xhat * gain.data + bias.data

    def grad_fn(g):
        gg = g * gain.data
        gx = None
        if a.requires_grad:
            gx = gg - gg.mean(axis=-1, keepdims=True)
            # the variance path only exists where the floor is inactive
            live = var > eps
            gx = gx - np.where(live, xhat * (gg * xhat).mean(axis=-1, keepdims=True), 0.0)
            gx = gx * scale
        ggain = _unbroadcast(g * xhat, gain.data.shape) if gain.requires_grad else None
        gbias = _unbroadcast(g, bias.data.shape) if bias.requires_grad else None
        return (gx, ggain, gbias)

    return _result(out, (a, gain, bias), grad_fn)


def tanh(a):
    a = _as_tensor(a)
    y = np.tanh(a.data)

    def grad_fn(g):
        return (g * (1.0 - y * y),)

    return _result(y, (a,), grad_fn)


def gelu(a):
    a = _as_tensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))

    def grad_fn(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
        return (g * (cdf + x * pdf),)

    return _result(x * cdf, (a,), grad_fn)


def absolute(a):
    a = _as_tensor(a)

    def grad_fn(g):
        return (g * np.sign(a.data),)

    return _result(np.abs(a.data), (a,), grad_fn)


def tsum(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape),)

    return _result(out, (a,), grad_fn)


def tmean(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    if axis is None:
        n = a.data.size
    elif isinstance(axis, tuple):
        n = int(np.prod([a.data.shape[i] for i in axis]))
    else:
        n = a.data.shape[axis]
    out = a.data.mean(axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g / n, a.data.shape),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / n, a.data.shape),)

    return _result(out, (a,), grad_fn)


def reshape(a, shape):
    a = _as_tensor(a)
    src = a.data.shape

    def grad_fn(g):
        return (g.reshape(src),)

    return _result(a.data.reshape(shape), (a,), grad_fn)


def transpose(a, axes=None):
    a = _as_tensor(a)
    if axes is None:
        inv = None
    else:
        inv = tuple(np.argsort(axes))

    def grad_fn(g):
        return (g.transpose(inv) if inv is not None else g.transpose(),)

    return _result(a.data.transpose(axes), (a,), grad_fn)


def take(a, index):
    """Basic slicing/int indexing; gradient scatters back into zeros."""
    a = _as_tensor(a)
    out = a.data[index]

    def grad_fn(g):
        gi = np.zeros_like(a.data)
        gi[index] = g
        return (gi,)

    return _result(out, (a,), grad_fn)


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)

    def grad_fn(g):
        return tuple(np.split(g, np.cumsum(sizes)[:-1], axis=axis))

    return _result(out, tuple(tensors), grad_fn)


def dropout(a, p, rng, training):
    """Inverted dropout: mask from ``rng`` scaled by 1/(1-p); identity in eval."""
    if not training or p <= 0.0:
        return a
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout: p must be in [0, 1), got {p}")
    a = _as_tensor(a)
    mask = (rng.random(a.data.shape) >= p) / (1.0 - p)
    return mul(a, Tensor(mask))


def backward(loss):
    """Accumulate d(loss)/d(leaf) into every requires_grad leaf.

    Replays the active tape once in reverse and clears it; a second call
    without newly recorded work raises. ``loss`` must be scalar.
    """
    if not isinstance(loss, Tensor):
        raise TapeError("backward: loss must be a Tensor")
    if loss.data.size != 1:
        raise TapeError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    records = _TAPE.records
    if not records:
        raise TapeError("backward: tape is empty (already replayed or nothing recorded)")
    _TAPE.records = []

    grads = {id(loss): np.ones_like(loss.data)}
    if loss.op_output and id(loss) != id(records[-1].out):
        # fine: the loss may be any recorded output, not only the last one
        pass
    for rec in reversed(records):
        g = grads.pop(id(rec.out), None)
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.grad_fn(g)):
            if gi is None or not inp.requires_grad:
                continue
            if inp.op_output:
                prev = grads.get(id(inp))
                grads[id(inp)] = gi if prev is None else prev + gi
            else:
                inp.grad = np.array(gi) if inp.grad is None else inp.grad + gi


def zero_grads(params):
    """Clear .grad on every tensor in an iterable or dict of tensors."""
    values = params.values() if isinstance(params, dict) else params
    for p in values:
        p.zero_grad()
