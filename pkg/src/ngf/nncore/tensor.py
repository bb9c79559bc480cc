"""Tape-based reverse-mode differentiation over float64 numpy arrays.

Operations record a node on the active :class:`Tape` when at least one input
requires a gradient. ``Tape.backward`` replays the nodes in reverse recording
order, which is a valid reverse topological order because a node can only
consume tensors that already exist.

Outside a ``with Tape():`` block nothing is recorded, which is how inference
runs.

Values are float64. :func:`compute_precision` switches new tensors to
``np.longdouble`` for a block; it exists so finite-difference gradient checks
can evaluate the forward pass below float64 roundoff and is not meant for
training.
"""
from __future__ import annotations

import contextlib
import threading

import numpy as np
from scipy.special import erf

from ..exceptions import ContractViolation

_state = threading.local()
_SQRT_HALF = np.sqrt(0.5)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
_TWO_OVER_SQRT_PI_LD = 2 / np.sqrt(np.longdouble("3.14159265358979323846264338327950288"))


def active_tape():
    return getattr(_state, "tape", None)


def compute_dtype():
    return getattr(_state, "dtype", np.float64)


@contextlib.contextmanager
def compute_precision(dtype):
    """Create tensors with ``dtype`` (float64 or longdouble) inside the block."""
    dtype = np.dtype(dtype).type
    if dtype not in (np.float64, np.longdouble):
        raise ValueError(f"unsupported compute dtype {dtype}")
    prev = compute_dtype()
    _state.dtype = dtype
    try:
        yield
    finally:
        _state.dtype = prev


class Tensor:
    """A float64 (or, inside :func:`compute_precision`, long double) array with a gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=compute_dtype())
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def numpy(self):
        return self.data

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

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

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def Parameter(data, name=None):
    return Tensor(data, requires_grad=True, name=name)


class Tape:
    """Records operations; ``backward`` accumulates into leaf ``.grad`` slots.

    With ``check_finite=True`` every recorded forward value and every
    propagated gradient is checked for NaN/Inf.
    """

    def __init__(self, check_finite=False):
        self.nodes = []
        self.check_finite = check_finite
        self._prev = None

    def __enter__(self):
        self._prev = active_tape()
        _state.tape = self
        return self

    def __exit__(self, *exc):
        _state.tape = self._prev
        return False

    def record(self, out, inputs, backward_fn):
        if self.check_finite and not np.all(np.isfinite(out.data)):
            raise FloatingPointError(f"non-finite value produced by {backward_fn.__qualname__}")
        self.nodes.append((out, inputs, backward_fn))

    def backward(self, loss: Tensor):
        """Propagate ``d loss`` back through the recorded nodes, then clear the tape.

        Gradients of leaf tensors (those not produced on this tape) are added
        to their ``.grad`` slot, so repeated calls accumulate.
        """
        if loss.data.size != 1:
            raise ContractViolation(f"backward needs a scalar loss, got shape {loss.shape}")
        grads = {id(loss): np.ones_like(loss.data)}
        produced = {id(out) for out, _, _ in self.nodes}
        leaves = {}
        if loss.requires_grad and id(loss) not in produced:
            leaves[id(loss)] = loss
        for out, inputs, fn in reversed(self.nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for t, gi in zip(inputs, fn(g)):
                if gi is None or not t.requires_grad:
                    continue
                if self.check_finite and not np.all(np.isfinite(gi)):
                    raise FloatingPointError(f"non-finite gradient from {fn.__qualname__}")
                key = id(t)
                grads[key] = grads[key] + gi if key in grads else gi
                if key not in produced:
                    leaves[key] = t
        for key, t in leaves.items():
            g = grads[key]
            t.grad = g if t.grad is None else t.grad + g
        self.nodes = []


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value, inputs, backward_fn):
    tape = active_tape()
    needs = tape is not None and any(isinstance(t, Tensor) and t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=needs)
    if needs:
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (numpy broadcasting rules)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ContractViolation(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# -- elementwise ----------------------------------------------------------------

def add(a, b):
    a, b = _wrap(a), _wrap(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return _make(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    _check_broadcast(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return _make(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)
    return _make(a.data * b.data, (a, b), backward)


def div(a, b):
    a, b = _wrap(a), _wrap(b)
    _check_broadcast(a, b, "div")
    out = a.data / b.data

    def backward(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)
    return _make(out, (a, b), backward)


def scale(a, c: float):
    a = _wrap(a)
    c = float(c)

    def backward(g):
        return (g * c,)
    return _make(a.data * c, (a,), backward)


def square(a):
    a = _wrap(a)

    def backward(g):
        return (2.0 * a.data * g,)
    return _make(a.data * a.data, (a,), backward)


def _erf_longdouble(x):
    """erf in long double: ``2/sqrt(pi) exp(-x^2) sum_n 2^n x^(2n+1) / (2n+1)!!``.

    All series terms are positive, so there is no cancellation; beyond
    ``|x| = 6.5`` erf equals +-1 to long-double precision.
    """
    x = np.asarray(x, dtype=np.longdouble)
    ax = np.minimum(np.abs(x), np.longdouble(6.5))
    x2 = ax * ax
    term = ax.copy()
    total = ax.copy()
    for n in range(1, 200):
        term = term * 2 * x2 / (2 * n + 1)
        total = total + term
        if np.all(term <= total * np.finfo(np.longdouble).eps):
            break
    out = _TWO_OVER_SQRT_PI_LD * np.exp(-x2) * total
    out = np.where(np.abs(x) >= 6.5, np.longdouble(1), np.minimum(out, np.longdouble(1)))
    return np.copysign(out, x)


def _erf(x):
    return _erf_longdouble(x) if x.dtype == np.longdouble else erf(x)


def gelu(a):
    """Exact (erf) GELU."""
    a = _wrap(a)
    x = a.data
    cdf = 0.5 * (1.0 + _erf(x * _SQRT_HALF))

    def backward(g):
        return (g * (cdf + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)),)
    return _make(x * cdf, (a,), backward)


def sigmoid_array(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(a):
    """``log(1 + exp(x))``, evaluated stably."""
    a = _wrap(a)
    x = a.data

    def backward(g):
        return (g * sigmoid_array(x),)
    return _make(np.logaddexp(0.0, x), (a,), backward)


def softmax(a, axis=-1):
    a = _wrap(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)
    return _make(p, (a,), backward)


def layernorm(a, eps=1e-5):
    """Normalize over the last axis to zero mean and unit variance (no affine)."""
    a = _wrap(a)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv
    def backward(g):
        gm = g.mean(axis=-1, keepdims=True)
        gy = (g * y).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - y * gy),)
    return _make(y, (a,), backward)


# -- linear algebra and shape ----------------------------------------------------

def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ContractViolation(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb
    return _make(a.data @ b.data, (a, b), backward)


def transpose(a):
    a = _wrap(a)

    def backward(g):
        return (g.T,)
    return _make(a.data.T, (a,), backward)


def reshape(a, shape):
    a = _wrap(a)
    old = a.shape

    def backward(g):
        return (g.reshape(old),)
    return _make(a.data.reshape(shape), (a,), backward)


def concat(tensors, axis=-1):
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))
    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def gather_rows(a, index):
    """``a[index]`` for an integer index array (the action of a selection matrix)."""
    a = _wrap(a)
    index = np.asarray(index, dtype=np.intp)

    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, index, g)
        return (out,)
    return _make(a.data[index], (a,), backward)


def scatter_rows(a, index, n_rows):
    """Inverse of :func:`gather_rows` for unique indices; unset rows are zero."""
    a = _wrap(a)
    index = np.asarray(index, dtype=np.intp)
    out = np.zeros((n_rows,) + a.shape[1:], dtype=a.data.dtype)
    out[index] = a.data

    def backward(g):
        return (g[index],)
    return _make(out, (a,), backward)


# -- reductions and losses ---------------------------------------------------------

def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    a = _wrap(a)
    shape = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)
    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def mean(a, axis=None, keepdims=False):
    a = _wrap(a)
    count = a.data.size if axis is None else a.shape[axis]
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def sum_squares(a):
    """``||a||^2`` over all entries."""
    a = _wrap(a)

    def backward(g):
        return (2.0 * g * a.data,)
    return _make(np.sum(a.data * a.data), (a,), backward)


def mse(a, b):
    """Mean squared difference over all entries."""
    a, b = _wrap(a), _wrap(b)
    if a.shape != b.shape:
        raise ContractViolation(f"mse: shapes {a.shape} and {b.shape} differ")
    diff = a.data - b.data
    n = diff.size

    def backward(g):
        gd = (2.0 / n) * g * diff
        return gd, -gd
    return _make(np.mean(diff * diff), (a, b), backward)
