"""Reverse-mode automatic differentiation on numpy arrays.

A minimal tape: every operation creates a ``Var`` holding its value, its
parents, and a closure that pushes the adjoint back to them. ``backward``
runs one reverse topological sweep. Values are scalars or ndarrays and
broadcasting follows numpy semantics (adjoints are sum-reduced back to the
parent's shape).

The time-derivative of a network output is obtained by running the forward
pass on (value, tangent) pairs of Vars; since the tangent arithmetic is
itself recorded on the tape, one reverse sweep differentiates through it,
giving exact parameter gradients of losses that involve dY/dt.
"""
from __future__ import annotations

import numpy as np


class NonFiniteGradient(Exception):
    """Raised when a NaN/Inf adjoint appears; names the offending node."""

    def __init__(self, op: str):
        self.op = op
        super().__init__(f"non-finite gradient at node '{op}'")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum-reduce a broadcasted adjoint back to the original shape."""
    grad = np.asarray(grad)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Var:
    """A node on the tape: value, parents, backward closure, adjoint."""

    __slots__ = ("value", "parents", "_backward", "grad", "op")

    # make ndarray OP Var defer to Var's reflected operators
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(self, value, parents=(), backward=None, op="leaf"):
        self.value = np.asarray(value, dtype=float)
        self.parents = parents
        self._backward = backward
        self.grad = None
        self.op = op

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    # -- arithmetic ----------------------------------------------------------

    @staticmethod
    def _lift(x) -> "Var":
        return x if isinstance(x, Var) else Var(x, op="const")

    def __add__(self, other):
        o = Var._lift(other)
        out = Var(self.value + o.value, (self, o), op="add")

        def back(g):
            return _unbroadcast(g, self.shape), _unbroadcast(g, o.shape)
        out._backward = back
        return out

    __radd__ = __add__

    def __sub__(self, other):
        o = Var._lift(other)
        out = Var(self.value - o.value, (self, o), op="sub")

        def back(g):
            return _unbroadcast(g, self.shape), _unbroadcast(-g, o.shape)
        out._backward = back
        return out

    def __rsub__(self, other):
        return Var._lift(other).__sub__(self)

    def __mul__(self, other):
        o = Var._lift(other)
        out = Var(self.value * o.value, (self, o), op="mul")

        def back(g):
            return (_unbroadcast(g * o.value, self.shape),
                    _unbroadcast(g * self.value, o.shape))
        out._backward = back
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = Var._lift(other)
        out = Var(self.value / o.value, (self, o), op="div")

        def back(g):
            return (_unbroadcast(g / o.value, self.shape),
                    _unbroadcast(-g * self.value / (o.value * o.value), o.shape))
        out._backward = back
        return out

    def __rtruediv__(self, other):
        return Var._lift(other).__truediv__(self)

    def __neg__(self):
        out = Var(-self.value, (self,), op="neg")
        out._backward = lambda g: (-g,)
        return out

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("only constant exponents are supported")
        out = Var(self.value ** p, (self,), op="pow")
        out._backward = lambda g: (g * p * self.value ** (p - 1),)
        return out

    def __matmul__(self, other):
        o = Var._lift(other)
        out = Var(self.value @ o.value, (self, o), op="matmul")

        def back(g):
            g = np.asarray(g)
            a, b = self.value, o.value
            if a.ndim == 1 and b.ndim == 1:
                return g * b, g * a
            if b.ndim == 1:
                return np.outer(g, b), a.T @ g
            if a.ndim == 1:
                return g @ b.T, np.outer(a, g)
            return g @ b.T, a.T @ g
        out._backward = back
        return out

    def __getitem__(self, idx):
        out = Var(self.value[idx], (self,), op="index")

        def back(g):
            full = np.zeros_like(self.value)
            full[idx] = g
            return (full,)
        out._backward = back
        return out

    def sum(self):
        out = Var(self.value.sum(), (self,), op="sum")
        out._backward = lambda g: (np.broadcast_to(g, self.shape).copy(),)
        return out

    def mean(self):
        n = self.value.size
        out = Var(self.value.mean(), (self,), op="mean")
        out._backward = lambda g: (np.broadcast_to(g / n, self.shape).copy(),)
        return out


# -- elementwise functions ---------------------------------------------------

def tanh(x: Var) -> Var:
    t = np.tanh(x.value)
    out = Var(t, (x,), op="tanh")
    out._backward = lambda g: (g * (1.0 - t * t),)
    return out


def sigmoid(x: Var) -> Var:
    s = 1.0 / (1.0 + np.exp(-x.value))
    out = Var(s, (x,), op="sigmoid")
    out._backward = lambda g: (g * s * (1.0 - s),)
    return out


def relu(x: Var) -> Var:
    # subgradient 0 at exactly 0
    mask = x.value > 0
    out = Var(np.where(mask, x.value, 0.0), (x,), op="relu")
    out._backward = lambda g: (g * mask,)
    return out


def sin(x: Var) -> Var:
    out = Var(np.sin(x.value), (x,), op="sin")
    out._backward = lambda g: (g * np.cos(x.value),)
    return out


def cos(x: Var) -> Var:
    out = Var(np.cos(x.value), (x,), op="cos")
    out._backward = lambda g: (-g * np.sin(x.value),)
    return out


def exp(x: Var) -> Var:
    e = np.exp(x.value)
    out = Var(e, (x,), op="exp")
    out._backward = lambda g: (g * e,)
    return out


# -- reverse sweep -----------------------------------------------------------

def backward(loss: Var) -> None:
    """Reverse-topological sweep from a scalar loss, populating .grad on
    every reachable node. Raises NonFiniteGradient on NaN/Inf adjoints."""
    if loss.value.size != 1:
        raise ValueError("backward requires a scalar loss")
    if not np.isfinite(loss.value):
        raise NonFiniteGradient(loss.op)

    order: list[Var] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))

    for node in order:
        node.grad = np.zeros_like(node.value)
    loss.grad = np.ones_like(loss.value)

    for node in reversed(order):
        if node._backward is None:
            continue
        grads = node._backward(node.grad)
        for parent, g in zip(node.parents, grads):
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(node.op)
            parent.grad = parent.grad + g


def grad(loss: Var, leaves) -> list[np.ndarray]:
    """Gradients of a scalar loss w.r.t. the given leaf Vars (zero for
    leaves that do not reach the loss)."""
    backward(loss)
    return [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
            for leaf in leaves]
