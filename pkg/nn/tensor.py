"""
Tensor - Reverse-Mode Autodiff Core

A Tensor wraps a numpy array (float32 by default, float64 preserved for
gradient checks) and, when it takes part in a differentiable
computation, the edge back to its parents plus the closure computing
the parents' gradients.

- Leaves created with requires_grad=True own a .grad accumulator that
  repeated backward() calls add into until zero_grad().
- Intermediate gradients live only for the duration of one backward().
- Inside no_grad() no graph is recorded.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Iterator, List, Optional, Sequence

import numpy as np

from constants.exit_codes import ExitCode
from core.exceptions import DirForgeError


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_grad_enabled = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    # ndarray (op) Tensor defers to the Tensor operator
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None, dtype=None):
        array = np.asarray(data, dtype=dtype)
        if array.dtype not in (np.float32, np.float64):
            array = array.astype(np.float32)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = np.zeros_like(array) if requires_grad else None
        self.name = name
        self._parents: tuple = ()
        self._backward: Optional[BackwardFn] = None

    # ─────────────────────────────────────────────
    # Graph construction
    # ─────────────────────────────────────────────

    @classmethod
    def from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: BackwardFn) -> "Tensor":
        out = cls(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    @property
    def shape(self):
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
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        if self.requires_grad and self.is_leaf:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    # ─────────────────────────────────────────────
    # Backward
    # ─────────────────────────────────────────────

    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self) -> None:
        if self.data.size != 1:
            raise DirForgeError(
                exit_code=ExitCode.INTERNAL_ERROR,
                detail=f"backward() needs a scalar loss, got shape {self.shape}",
            )
        if not self.requires_grad:
            return

        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(self._topological_order()):
            upstream = grads.pop(id(node), None)
            if upstream is None:
                continue

            if node.is_leaf:
                upstream = upstream.astype(node.data.dtype, copy=False)
                node.grad = upstream.copy() if node.grad is None else node.grad + upstream
                continue

            for parent, parent_grad in zip(node._parents, node._backward(upstream)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad

    # ─────────────────────────────────────────────
    # Operators (implemented in nn.functional)
    # ─────────────────────────────────────────────

    def __add__(self, other):
        from nn import functional as F
        return F.add(self, other)

    def __radd__(self, other):
        from nn import functional as F
        return F.add(other, self)

    def __sub__(self, other):
        from nn import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from nn import functional as F
        return F.sub(other, self)

    def __mul__(self, other):
        from nn import functional as F
        return F.mul(self, other)

    def __rmul__(self, other):
        from nn import functional as F
        return F.mul(other, self)

    def __truediv__(self, other):
        from nn import functional as F
        return F.div(self, other)

    def __rtruediv__(self, other):
        from nn import functional as F
        return F.div(other, self)

    def __neg__(self):
        from nn import functional as F
        return F.neg(self)

    def __getitem__(self, index):
        from nn import functional as F
        return F.getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        from nn import functional as F
        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from nn import functional as F
        return F.mean(self, axis=axis, keepdims=keepdims)


def as_tensor(value, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype))


def assert_finite(tensors: Iterable[Tensor], where: str = "") -> None:
    """NaN/Inf hook on values and gradients."""
    for tensor in tensors:
        if not np.all(np.isfinite(tensor.data)):
            raise DirForgeError(
                exit_code=ExitCode.INTERNAL_ERROR,
                detail=f"Non-finite values {where} | tensor={tensor.name}",
            )
        if tensor.grad is not None and not np.all(np.isfinite(tensor.grad)):
            raise DirForgeError(
                exit_code=ExitCode.INTERNAL_ERROR,
                detail=f"Non-finite gradient {where} | tensor={tensor.name}",
            )
