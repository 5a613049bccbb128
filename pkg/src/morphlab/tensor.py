"""Dense tensors with a tape-based reverse-mode differentiator.

A :class:`Tensor` wraps a numpy array. Kernels executed while a :class:`Tape`
is active (``with Tape() as tape:``) and that touch a tensor with
``requires_grad=True`` are appended to the tape together with a closure that
maps the output adjoint to input adjoints. :func:`backward` replays those
closures in reverse order.

Tapes are thread-local and single-use.
"""

from __future__ import annotations

import itertools
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NonFiniteError, ShapeError, TapeError

_ids = itertools.count(1)
_local = threading.local()

DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """An n-dimensional float array that can participate in differentiation."""

    __slots__ = ("data", "requires_grad", "id", "__weakref__")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in DTYPES:
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.id = next(_ids)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self):
        return self.data.shape[0]

    # operator sugar
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
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if dtype is None and isinstance(x, (int, float)):
        dtype = np.float64
    return Tensor(x, dtype=dtype)


def _check_finite(name: str, tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        if not np.isfinite(t.data).all():
            raise NonFiniteError(f"{name}: non-finite value in input of shape {t.shape}")


class _Node:
    __slots__ = ("name", "out", "inputs", "backward")

    def __init__(self, name, out, inputs, backward):
        self.name = name
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered record of differentiable kernel applications."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False

    def __enter__(self):
        if self.consumed:
            raise TapeError("tape already consumed")
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def gradient(self, root: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
        grads = backward(self, root)
        return [grads[t] for t in wrt]


def kernel(name: str, inputs: Sequence[Tensor], out_data: np.ndarray,
           backward_fn: Callable[[np.ndarray], Sequence]) -> Tensor:
    """Wrap ``out_data`` in a Tensor and record it on the active tape if needed.

    ``backward_fn`` receives the output adjoint and returns one adjoint (or
    None) per input.
    """
    out = Tensor(out_data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        if tape.consumed:
            raise TapeError("tape already consumed")
        out.requires_grad = True
        tape.nodes.append(_Node(name, out, tuple(inputs), backward_fn))
    return out


class Gradients(dict):
    """Mapping from tensor id to adjoint array.

    Indexing with a Tensor that never contributed to the root yields zeros
    of that tensor's shape.
    """

    def __getitem__(self, key):
        if isinstance(key, Tensor):
            if key.id in self:
                return dict.__getitem__(self, key.id)
            return np.zeros_like(key.data)
        return dict.__getitem__(self, key)

    def wrt(self, *tensors: Tensor) -> list[np.ndarray]:
        return [self[t] for t in tensors]


def backward(tape: Tape, root: Tensor) -> Gradients:
    """Replay the tape in reverse and return adjoints of every recorded tensor."""
    if tape.consumed:
        raise TapeError("tape already consumed")
    if root.size != 1:
        raise ShapeError(f"backward: root must be scalar, got shape {root.shape}")
    if not root.requires_grad:
        raise TapeError("backward: root is not reachable from any recorded kernel")
    tape.consumed = True
    grads = Gradients()
    dict.__setitem__(grads, root.id, np.ones_like(root.data))
    for node in reversed(tape.nodes):
        g = dict.get(grads, node.out.id)
        if g is None:
            continue
        in_grads = node.backward(g)
        for t, gi in zip(node.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            gi = np.asarray(gi, dtype=t.data.dtype)
            if gi.shape != t.shape:
                gi = _unbroadcast(gi, t.shape)
            prev = dict.get(grads, t.id)
            dict.__setitem__(grads, t.id, gi if prev is None else prev + gi)
    return grads


def value_and_grad(fn: Callable[..., Tensor], *arrays, dtype=None):
    """Evaluate ``fn`` on fresh leaf tensors and return (value, [grads])."""
    with Tape() as tape:
        leaves = [Tensor(a, requires_grad=True, dtype=dtype) for a in arrays]
        out = fn(*leaves)
    grads = backward(tape, out)
    return float(out.data.reshape(-1)[0]), grads.wrt(*leaves)


def grad_check(f: Callable[[Tensor], Tensor], x, step: float = 1e-5,
               indices=None) -> float:
    """Max relative error between tape adjoints and central differences.

    ``indices`` optionally restricts the comparison to a subset of flat
    coordinates (useful for large inputs).
    """
    x = np.array(x, dtype=np.float64)
    _, (analytic,) = value_and_grad(f, x)
    analytic = analytic.reshape(-1)
    flat = x.reshape(-1)
    coords = range(flat.size) if indices is None else indices
    worst = 0.0
    for i in coords:
        orig = flat[i]
        hi, lo = orig + step, orig - step
        flat[i] = hi
        fp = float(f(Tensor(x)).data.reshape(-1)[0])
        flat[i] = lo
        fm = float(f(Tensor(x)).data.reshape(-1)[0])
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"grad_check: non-finite evaluation at coordinate {i}")
        # divide by the realized step, not the requested one
        numeric = (fp - fm) / (hi - lo)
        a = analytic[i]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(name, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{name}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    _check_finite("add", (a, b))
    return kernel("add", (a, b), a.data + b.data, lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    _check_finite("sub", (a, b))
    return kernel("sub", (a, b), a.data - b.data, lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("multiply", a, b)
    _check_finite("multiply", (a, b))
    ad, bd = a.data, b.data
    return kernel("multiply", (a, b), ad * bd, lambda g: (g * bd, g * ad))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("divide", a, b)
    _check_finite("divide", (a, b))
    if np.any(b.data == 0):
        raise NonFiniteError("divide: zero divisor")
    ad, bd = a.data, b.data
    out = ad / bd
    return kernel("divide", (a, b), out, lambda g: (g / bd, -g * out / bd))


def neg(a) -> Tensor:
    a = as_tensor(a)
    _check_finite("neg", (a,))
    return kernel("neg", (a,), -a.data, lambda g: (-g,))


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    _check_finite("power", (a,))
    ad = a.data
    return kernel("power", (a,), ad ** exponent,
                  lambda g: (g * exponent * ad ** (exponent - 1),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    _check_finite("exp", (a,))
    out = np.exp(a.data)
    return kernel("exp", (a,), out, lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    _check_finite("log", (a,))
    if np.any(a.data <= 0):
        raise NonFiniteError("log: non-positive input")
    ad = a.data
    return kernel("log", (a,), np.log(ad), lambda g: (g / ad,))


def sqrt(a) -> Tensor:
    """Square root; the adjoint at exactly zero is taken as zero."""
    a = as_tensor(a)
    _check_finite("sqrt", (a,))
    if np.any(a.data < 0):
        raise NonFiniteError("sqrt: negative input")
    out = np.sqrt(a.data)

    def back(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g / (2 * safe), 0.0),)

    return kernel("sqrt", (a,), out, back)


def tabs(a) -> Tensor:
    a = as_tensor(a)
    _check_finite("abs", (a,))
    ad = a.data
    return kernel("abs", (a,), np.abs(ad), lambda g: (g * np.sign(ad),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    _check_finite("tanh", (a,))
    out = np.tanh(a.data)
    return kernel("tanh", (a,), out, lambda g: (g * (1 - out * out),))


def softplus(a) -> Tensor:
    a = as_tensor(a)
    _check_finite("softplus", (a,))
    ad = a.data
    out = np.maximum(ad, 0) + np.log1p(np.exp(-np.abs(ad)))
    sig = 0.5 * (1 + np.tanh(0.5 * ad))
    return kernel("softplus", (a,), out, lambda g: (g * sig,))


def maximum(a, floor: float) -> Tensor:
    """Elementwise max against a constant."""
    a = as_tensor(a)
    _check_finite("maximum", (a,))
    keep = a.data > floor
    return kernel("maximum", (a,), np.where(keep, a.data, floor), lambda g: (g * keep,))


def where(mask, a, b) -> Tensor:
    """Select ``a`` where the constant boolean ``mask`` holds, else ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    _check_finite("where", (a, b))
    mask = np.asarray(mask, dtype=bool)
    try:
        out = np.where(mask, a.data, b.data)
    except ValueError:
        raise ShapeError(f"where: incompatible shapes {mask.shape}, {a.shape}, {b.shape}") from None
    return kernel("where", (a, b), out,
                  lambda g: (np.where(mask, g, 0.0), np.where(mask, 0.0, g)))


def atan2(y, x) -> Tensor:
    """Angle of (x, y); the adjoint at the origin is zero."""
    y, x = as_tensor(y), as_tensor(x)
    _broadcast_shape("atan2", y, x)
    _check_finite("atan2", (y, x))
    yd, xd = y.data, x.data
    r2 = xd * xd + yd * yd
    nz = r2 > 0
    inv = np.where(nz, 1.0 / np.where(nz, r2, 1.0), 0.0)
    return kernel("atan2", (y, x), np.arctan2(yd, xd),
                  lambda g: (g * xd * inv, -g * yd * inv))


def hypot(x, y) -> Tensor:
    """Euclidean magnitude; the adjoint at the origin is zero."""
    x, y = as_tensor(x), as_tensor(y)
    _broadcast_shape("hypot", x, y)
    _check_finite("hypot", (x, y))
    xd, yd = x.data, y.data
    out = np.hypot(xd, yd)
    nz = out > 0
    inv = np.where(nz, 1.0 / np.where(nz, out, 1.0), 0.0)
    return kernel("hypot", (x, y), out, lambda g: (g * xd * inv, g * yd * inv))


# ---------------------------------------------------------------------------
# reductions and shape manipulation

def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    _check_finite("sum", (a,))
    shape = a.shape
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return kernel("sum", (a,), out, back)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if np.isscalar(axis) else axis
        count = int(np.prod([a.shape[i] for i in axes]))
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} into {shape}") from None
    src = a.shape
    return kernel("reshape", (a,), out, lambda g: (g.reshape(src),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    out = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return kernel("transpose", (a,), out, lambda g: (np.transpose(g, inv),))


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    _check_finite("concat", tensors)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise ShapeError(f"concat: incompatible shapes {shapes} along axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return kernel("concat", tensors, out, lambda g: tuple(np.split(g, bounds, axis=axis)))


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    out = a.data[index]
    shape, dtype = a.shape, a.dtype

    def back(g):
        full = np.zeros(shape, dtype=dtype)
        np.add.at(full, index, g)
        return (full,)

    return kernel("getitem", (a,), np.array(out), back)


def take(a, indices, axis: int) -> Tensor:
    """Gather along one axis with an integer index array (repeats allowed)."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.intp)
    out = np.take(a.data, indices, axis=axis)
    shape, dtype = a.shape, a.dtype

    def back(g):
        full = np.zeros(shape, dtype=dtype)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return (full,)

    return kernel("take", (a,), out, back)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None
    _check_finite("matmul", (a, b))
    ad, bd = a.data, b.data
    return kernel("matmul", (a, b), ad @ bd,
                  lambda g: (g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g))
