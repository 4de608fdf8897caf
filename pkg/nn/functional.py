"""
Elementwise, reduction and structural ops on Tensors.

Every op computes its forward value with numpy and registers a closure
returning one gradient per parent (None where a parent needs none).
Binary ops follow numpy broadcasting; gradients are summed back to
each parent's shape. Reductions accumulate in float64.
"""

from typing import Optional, Sequence

import numpy as np

from constants.exit_codes import ExitCode
from core.exceptions import DirForgeError
from nn.tensor import Tensor, as_tensor


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _pair(a, b):
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


# ─────────────────────────────────────────────
# Arithmetic
# ─────────────────────────────────────────────

def add(a, b) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor.from_op(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor.from_op(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor.from_op(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data / b.data

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * out / b.data, b.shape),
        )

    return Tensor.from_op(out, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return Tensor.from_op(-a.data, (a,), lambda g: (-g,))


def square(a: Tensor) -> Tensor:
    return Tensor.from_op(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor.from_op(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return Tensor.from_op(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)

    def backward(g):
        positive = out > 0
        safe = np.where(positive, out, 1.0)
        return (np.where(positive, g / (2.0 * safe), 0.0).astype(a.dtype),)

    return Tensor.from_op(out, (a,), backward)


def clip(a: Tensor, low: Optional[float] = None, high: Optional[float] = None) -> Tensor:
    out = np.clip(a.data, low, high)

    def backward(g):
        passed = np.ones(a.shape, dtype=bool)
        if low is not None:
            passed &= a.data >= low
        if high is not None:
            passed &= a.data <= high
        return (np.where(passed, g, 0.0).astype(a.dtype),)

    return Tensor.from_op(out, (a,), backward)


def maximum(a: Tensor, floor) -> Tensor:
    """Elementwise max against a constant floor; no gradient where floored."""
    floor = np.asarray(floor, dtype=a.dtype)
    kept = a.data >= floor
    out = np.where(kept, a.data, floor).astype(a.dtype)

    def backward(g):
        return (np.where(kept, g, 0.0).astype(a.dtype),)

    return Tensor.from_op(out, (a,), backward)


# ─────────────────────────────────────────────
# Activations
# ─────────────────────────────────────────────

def relu(a: Tensor) -> Tensor:
    return leaky_relu(a, slope=0.0)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    positive = a.data > 0
    out = np.where(positive, a.data, slope * a.data).astype(a.dtype)

    def backward(g):
        return (np.where(positive, g, slope * g).astype(a.dtype),)

    return Tensor.from_op(out, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    e = np.exp(-np.abs(a.data))
    out = np.where(a.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(a.dtype)
    return Tensor.from_op(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return Tensor.from_op(out, (a,), lambda g: (g * (1.0 - out * out),))


# ─────────────────────────────────────────────
# Reductions
# ─────────────────────────────────────────────

def _normalize_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, a.ndim)
    out = np.sum(a.data, axis=axes, keepdims=keepdims, dtype=np.float64).astype(a.dtype)

    def backward(g):
        expanded = g if keepdims else np.expand_dims(g, axes)
        return (np.broadcast_to(expanded, a.shape).astype(a.dtype),)

    return Tensor.from_op(np.asarray(out), (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = np.mean(a.data, axis=axes, keepdims=keepdims, dtype=np.float64).astype(a.dtype)

    def backward(g):
        expanded = g if keepdims else np.expand_dims(g, axes)
        return ((np.broadcast_to(expanded, a.shape) / count).astype(a.dtype),)

    return Tensor.from_op(np.asarray(out), (a,), backward)


def max(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    """Maximum along one axis; the gradient goes to the first maximal entry."""
    axis = axis % a.ndim
    winner = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(winner, axis), axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def backward(g):
        expanded = g if keepdims else np.expand_dims(g, axis)
        grad = np.zeros_like(a.data)
        np.put_along_axis(grad, np.expand_dims(winner, axis), expanded, axis=axis)
        return (grad,)

    return Tensor.from_op(out, (a,), backward)


# ─────────────────────────────────────────────
# Structural
# ─────────────────────────────────────────────

def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    out = np.concatenate([t.data for t in tensors], axis=axis)

    def backward(g):
        grads = []
        for start, stop in zip(bounds[:-1], bounds[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(int(start), int(stop))
            grads.append(g[tuple(index)])
        return grads

    return Tensor.from_op(out, tensors, backward)


def getitem(a: Tensor, index) -> Tensor:
    out = a.data[index]

    def backward(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, g)
        return (grad,)

    return Tensor.from_op(np.array(out), (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    return Tensor.from_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def check_same_shape(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise DirForgeError(
            exit_code=ExitCode.DATA_ERROR,
            detail=f"{what}: shape mismatch {a.shape} vs {b.shape}",
        )
