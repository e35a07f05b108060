"""Dense tensor with reverse-mode automatic differentiation.

A ``Tensor`` wraps a numpy array together with an optional gradient and a
reference to the operations that produced it.  The recorded graph is the set
of ``_prev`` edges plus the per-node ``_backward`` closures; calling
:meth:`Tensor.backward` on a scalar walks that graph once in reverse
topological order and accumulates gradients into every ``requires_grad``
leaf.

Forward values default to float32.  Building a graph in float64 (for
finite-difference checks) works by constructing the leaves with
``dtype=np.float64``; every op preserves the promoted dtype.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

ArrayLike = Union[np.ndarray, float, int, Sequence]


class DimensionError(ValueError):
    """Shape or axis mismatch between operands, with the offending axes named."""


def _as_array(data: ArrayLike, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        return np.ascontiguousarray(arr, dtype=dtype)
    if arr.dtype == np.float64:
        return np.ascontiguousarray(arr)
    return np.ascontiguousarray(arr, dtype=np.float32)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, inverting numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """N-dimensional array with optional gradient tracking.

    Attributes:
        data: the forward value, a contiguous numpy array.
        requires_grad: whether gradients accumulate into this node.
        grad: accumulated gradient (same shape as ``data``) or None.
    """

    __slots__ = ("data", "requires_grad", "grad", "_prev", "_backward", "_op",
                 "_backward_ran")

    def __init__(self, data: ArrayLike, requires_grad: bool = False,
                 dtype=None):
        self.data = _as_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._prev: Tuple["Tensor", ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self._op = ""
        self._backward_ran = False

    # -- graph plumbing ----------------------------------------------------

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Iterable["Tensor"],
                 op: str) -> "Tensor":
        parents = tuple(parents)
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = any(p.requires_grad for p in parents)
        out.grad = None
        out._op = op
        out._backward = None
        out._backward_ran = False
        out._prev = parents if out.requires_grad else ()
        return out

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = grad.copy() if isinstance(grad, np.ndarray) else grad
        else:
            self.grad = self.grad + grad

    # -- public API ---------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Reverse-mode pass from a scalar; fills ``grad`` on every leaf.

        Raises:
            ValueError: if this tensor is not a single element, or if
                backward is called a second time on the same forward graph.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward requires a scalar loss, got shape {self.shape}")
        if self._backward_ran:
            raise RuntimeError(
                "backward already ran on this graph; build a new forward pass")
        self._backward_ran = True

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._prev:
                if id(parent) not in visited:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ---------------------------------------------------------

    def _coerce(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    def __add__(self, other):
        other = self._coerce(other)
        out = Tensor._from_op(self.data + other.data, (self, other), "add")
        if out.requires_grad:
            a, b = self, other

            def _backward(g):
                if a.requires_grad:
                    a._accumulate(unbroadcast(g, a.shape))
                if b.requires_grad:
                    b._accumulate(unbroadcast(g, b.shape))
            out._backward = _backward
        return out

    __radd__ = __add__

    def __mul__(self, other):
        other = self._coerce(other)
        out = Tensor._from_op(self.data * other.data, (self, other), "mul")
        if out.requires_grad:
            a, b = self, other

            def _backward(g):
                if a.requires_grad:
                    a._accumulate(unbroadcast(g * b.data, a.shape))
                if b.requires_grad:
                    b._accumulate(unbroadcast(g * a.data, b.shape))
            out._backward = _backward
        return out

    __rmul__ = __mul__

    def __neg__(self):
        out = Tensor._from_op(-self.data, (self,), "neg")
        if out.requires_grad:
            a = self

            def _backward(g):
                a._accumulate(-g)
            out._backward = _backward
        return out

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __getitem__(self, index):
        out = Tensor._from_op(np.ascontiguousarray(self.data[index]),
                              (self,), "slice")
        if out.requires_grad:
            a = self

            def _backward(g):
                full = np.zeros_like(a.data)
                full[index] += g
                a._accumulate(full)
            out._backward = _backward
        return out

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor._from_op(self.data.reshape(shape), (self,), "reshape")
        if out.requires_grad:
            a = self

            def _backward(g):
                a._accumulate(g.reshape(a.shape))
            out._backward = _backward
        return out

    def abs(self) -> "Tensor":
        out = Tensor._from_op(np.abs(self.data), (self,), "abs")
        if out.requires_grad:
            a = self

            def _backward(g):
                # subgradient 0 at exactly zero residual
                a._accumulate(g * np.sign(a.data))
            out._backward = _backward
        return out

    def exp(self) -> "Tensor":
        y = np.exp(self.data)
        out = Tensor._from_op(y, (self,), "exp")
        if out.requires_grad:
            a = self

            def _backward(g):
                a._accumulate(g * y)
            out._backward = _backward
        return out

    def log(self) -> "Tensor":
        out = Tensor._from_op(np.log(self.data), (self,), "log")
        if out.requires_grad:
            a = self

            def _backward(g):
                a._accumulate(g / a.data)
            out._backward = _backward
        return out

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        y = self.data.sum(axis=axis, keepdims=keepdims)
        out = Tensor._from_op(np.asarray(y), (self,), "sum")
        if out.requires_grad:
            a = self
            in_shape = a.shape

            def _backward(g):
                if axis is None:
                    a._accumulate(np.broadcast_to(g, in_shape).astype(a.dtype))
                    return
                axes = axis if isinstance(axis, tuple) else (axis,)
                axes = tuple(ax % len(in_shape) for ax in axes)
                gg = g
                if not keepdims:
                    for ax in sorted(axes):
                        gg = np.expand_dims(gg, ax)
                a._accumulate(np.broadcast_to(gg, in_shape).astype(a.dtype))
            out._backward = _backward
        return out

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            n = self.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            n = int(np.prod([self.shape[ax] for ax in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def __repr__(self) -> str:
        grad_state = "grad" if self.requires_grad else "no-grad"
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, {grad_state})"


def zeros(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype))


def assert_finite(t: Tensor, where: str = "tensor") -> None:
    """Raise if any entry is NaN or infinite; finite data is an invariant."""
    if not np.isfinite(t.data).all():
        raise FloatingPointError(f"non-finite values in {where}")
