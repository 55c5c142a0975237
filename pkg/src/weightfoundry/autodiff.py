"""Minimal reverse-mode automatic differentiation over numpy arrays.

Float64 throughout. Every Tensor records its parents and a closure that
routes the output gradient back to them; backward() walks the graph in
reverse topological order. Broadcasting is supported by summing gradients
back down to each parent's shape.
"""
from __future__ import annotations

import math

import numpy as np

_GELU_C = math.sqrt(2.0 / math.pi)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over the axes that broadcasting expanded."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "_parents")

    def __init__(self, data, parents=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents  # tuple of (Tensor, grad_fn)

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    # --- graph traversal ---

    def backward(self) -> None:
        """Accumulate gradients of this (scalar) tensor into the whole graph."""
        if self.data.size != 1:
            raise ValueError("backward() expects a scalar loss")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node.grad is None:
                continue
            for parent, grad_fn in node._parents:
                contribution = grad_fn(node.grad)
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad = parent.grad + contribution

    # --- arithmetic ---

    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data + other.data, (
            (self, lambda g: _unbroadcast(g, self.data.shape)),
            (other, lambda g: _unbroadcast(g, other.data.shape)),
        ))
        return out

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.data, ((self, lambda g: -g),))

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data * other.data, (
            (self, lambda g: _unbroadcast(g * other.data, self.data.shape)),
            (other, lambda g: _unbroadcast(g * self.data, other.data.shape)),
        ))
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data / other.data, (
            (self, lambda g: _unbroadcast(g / other.data, self.data.shape)),
            (other, lambda g: _unbroadcast(-g * self.data / other.data ** 2, other.data.shape)),
        ))
        return out

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent: float):
        out = Tensor(self.data ** exponent, (
            (self, lambda g: g * exponent * self.data ** (exponent - 1)),
        ))
        return out

    def __matmul__(self, other):
        other = as_tensor(other)

        def grad_left(g):
            return _unbroadcast(g @ np.swapaxes(other.data, -1, -2), self.data.shape)

        def grad_right(g):
            return _unbroadcast(np.swapaxes(self.data, -1, -2) @ g, other.data.shape)

        return Tensor(self.data @ other.data, ((self, grad_left), (other, grad_right)))

    # --- shape ---

    def reshape(self, *shape):
        old = self.data.shape
        return Tensor(self.data.reshape(*shape), ((self, lambda g: g.reshape(old)),))

    def swapaxes(self, a: int, b: int):
        return Tensor(np.swapaxes(self.data, a, b), ((self, lambda g: np.swapaxes(g, a, b)),))

    def transpose(self, *axes):
        inverse = np.argsort(axes)
        return Tensor(self.data.transpose(*axes), ((self, lambda g: g.transpose(*inverse)),))

    # --- reductions ---

    def sum(self, axis=None, keepdims=False):
        def grad_fn(g):
            if axis is None:
                return np.broadcast_to(g, self.data.shape).copy()
            g_expanded = g if keepdims else np.expand_dims(g, axis)
            return np.broadcast_to(g_expanded, self.data.shape).copy()

        return Tensor(self.data.sum(axis=axis, keepdims=keepdims), ((self, grad_fn),))

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(count)

    # --- elementwise nonlinearities ---

    def sqrt(self):
        root = np.sqrt(self.data)
        return Tensor(root, ((self, lambda g: g * 0.5 / root),))

    def exp(self):
        e = np.exp(self.data)
        return Tensor(e, ((self, lambda g: g * e),))

    def log(self):
        return Tensor(np.log(self.data), ((self, lambda g: g / self.data),))

    def tanh(self):
        t = np.tanh(self.data)
        return Tensor(t, ((self, lambda g: g * (1.0 - t * t)),))

    def relu(self):
        keep = (self.data > 0).astype(np.float64)
        return Tensor(self.data * keep, ((self, lambda g: g * keep),))

    def gelu(self):
        """GPT-2 style tanh-approximated GELU."""
        x = self.data
        inner = _GELU_C * (x + 0.044715 * x ** 3)
        t = np.tanh(inner)
        out = 0.5 * x * (1.0 + t)

        def grad_fn(g):
            d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
            return g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner)

        return Tensor(out, ((self, grad_fn),))

    def softmax(self):
        """Numerically stable softmax over the last axis."""
        shifted = self.data - self.data.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=-1, keepdims=True)

        def grad_fn(g):
            return (g - (g * y).sum(axis=-1, keepdims=True)) * y

        return Tensor(y, ((self, grad_fn),))

    def logsumexp(self, axis: int = -1):
        m = self.data.max(axis=axis, keepdims=True)
        e = np.exp(self.data - m)
        s = e.sum(axis=axis, keepdims=True)
        out = np.squeeze(m + np.log(s), axis=axis)

        def grad_fn(g):
            return np.expand_dims(g, axis) * (e / s)

        return Tensor(out, ((self, grad_fn),))


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along an axis; gradients are split back at the seams."""
    sizes = [t.data.shape[axis] for t in tensors]
    edges = np.cumsum([0] + sizes)
    parents = []
    for t, lo, hi in zip(tensors, edges[:-1], edges[1:]):
        def grad_fn(g, lo=int(lo), hi=int(hi)):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            return g[tuple(index)]

        parents.append((t, grad_fn))
    return Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(parents))


def take(table: Tensor, indices: np.ndarray) -> Tensor:
    """Row lookup table[indices]; scattered gradient accumulation."""
    indices = np.asarray(indices)

    def grad_fn(g):
        out = np.zeros_like(table.data)
        np.add.at(out, indices, g)
        return out

    return Tensor(table.data[indices], ((table, grad_fn),))


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy of integer labels; fused stable gradient."""
    labels = np.asarray(labels)
    n = logits.data.shape[0]
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -log_probs[np.arange(n), labels].mean()

    def grad_fn(g):
        grad = np.exp(log_probs)
        grad[np.arange(n), labels] -= 1.0
        return g * grad / n

    return Tensor(loss, ((logits, grad_fn),))
