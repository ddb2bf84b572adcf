"""A small reverse-mode autodiff tensor over numpy arrays.

Each op records its parents and a closure mapping the output gradient to
one gradient per parent. ``backward`` walks the graph in reverse
topological order and accumulates into ``.grad`` of leaf tensors that
require gradients (parameters). Intermediate gradients are not kept.

Ops preserve the input dtype, so a float64 model gives float64 gradients
for finite-difference checks.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np

from ..errors import ShapeError

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Build no graph inside the block (inference)."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        data = np.asarray(data)
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float32)
        self.data = data
        self.grad = None
        track = grad_enabled() and (requires_grad or any(p.requires_grad for p in parents))
        self.requires_grad = bool(track) if parents else bool(requires_grad)
        self._parents = tuple(parents) if track and parents else ()
        self._backward = backward if self._parents else None

    shape = property(lambda self: self.data.shape)
    dtype = property(lambda self: self.data.dtype)
    ndim = property(lambda self: self.data.ndim)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def backward(self, grad=None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order, seen, stack = [], set(), [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            stack.extend((p, False) for p in node._parents if id(p) not in seen)
        grads = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(as_tensor(other, self.dtype), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other, self.dtype), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)


class Parameter(Tensor):
    """A named learnable leaf; ``grad`` starts as zeros of the same shape."""

    def __init__(self, data, init: str = "normal"):
        super().__init__(np.array(data, copy=True), requires_grad=True)
        self.init = init
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def backward(self, grad=None):
        raise TypeError("backward() is called on outputs, not parameters")


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype) if dtype is not None else np.asarray(x)
    return Tensor(arr)


def unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    out = a.data + b.data
    return Tensor(out, parents=(a, b),
                  backward=lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    """Elementwise product; ``b`` may be a constant array or scalar."""
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        c = np.asarray(b, dtype=a.dtype) if np.ndim(b) else float(b)
        return Tensor(a.data * c, parents=(a,), backward=lambda g: (unbroadcast(g * c, a.shape),))
    return Tensor(a.data * b.data, parents=(a, b),
                  backward=lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul needs operands with at least two dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")

    def backward(g):
        ga = unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor(a.data @ b.data, parents=(a, b), backward=backward)


def reshape(a: Tensor, shape) -> Tensor:
    return Tensor(a.data.reshape(shape), parents=(a,), backward=lambda g: (g.reshape(a.shape),))


def swapaxes(a: Tensor, i: int, j: int) -> Tensor:
    return Tensor(np.swapaxes(a.data, i, j), parents=(a,), backward=lambda g: (np.swapaxes(g, i, j),))


def expand(a: Tensor, shape) -> Tensor:
    """Broadcast view to ``shape``; the backward pass sums over the copies."""
    return Tensor(np.broadcast_to(a.data, shape), parents=(a,),
                  backward=lambda g: (unbroadcast(g, a.shape),))


def take(a: Tensor, indices, axis: int) -> Tensor:
    """Gather along ``axis``; repeated indices accumulate in the backward pass."""
    indices = np.asarray(indices, dtype=np.intp)
    axis = axis % a.ndim

    def backward(g):
        out = np.zeros_like(a.data)
        moved = np.moveaxis(out, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return (out,)

    return Tensor(np.take(a.data, indices, axis=axis), parents=(a,), backward=backward)


def reduce_sum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor(a.data.sum(axis=axis, keepdims=keepdims), parents=(a,), backward=backward)


def reduce_mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(reduce_sum(a, axis, keepdims), 1.0 / float(count))
