"""Dense float64 tensor with reverse-mode autodiff lineage."""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """N-dimensional double array carrying an optional gradient buffer.

    A tensor produced by an op on inputs that require gradients records its
    parents and a backward closure mapping the output gradient to one gradient
    per parent (``None`` for parents that do not need one).
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[BackwardFn] = None
        self.op = ""

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def backward(self, grad=None) -> None:
        """Backpropagate from this tensor, accumulating into ``.grad`` of every ancestor."""
        if grad is None:
            grad = np.ones_like(self.data)
        order = _topological_order(self)
        self.grad = np.array(grad, dtype=np.float64) if self.grad is None else self.grad + grad
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            parent_grads = node._backward(node.grad)
            for parent, g in zip(node._parents, parent_grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.array(g, dtype=np.float64)
                else:
                    parent.grad = parent.grad + g

    # arithmetic sugar; the real ops live in ops.py
    def __add__(self, other):
        from .ops import add
        return add(self, other)

    def __mul__(self, other):
        from .ops import mul, scale
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __sub__(self, other):
        from .ops import add, scale
        return add(self, scale(other, -1.0))

    def __neg__(self):
        from .ops import scale
        return scale(self, -1.0)

    def reshape(self, *shape):
        from .ops import reshape
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def make_result(data: np.ndarray, parents: Sequence[Tensor], backward: BackwardFn, op: str) -> Tensor:
    """Wrap an op output, recording lineage only if some parent needs gradients."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        out.op = op
    return out


def _topological_order(root: Tensor) -> list[Tensor]:
    # iterative DFS; recursion depth would otherwise scale with network depth
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)
