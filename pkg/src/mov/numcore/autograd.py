"""Tiny reverse-mode autodiff over float64 numpy arrays.

A ``Var`` wraps an array and, when any input requires a gradient, records the
closure needed to push an upstream gradient back to its parents. Graphs are
built eagerly and walked once by :meth:`Var.backward`.

Only the operations the model actually uses are provided. Several of them
(``linear``, ``layer_norm``, ``softmax``, ``log_softmax``, ``gelu``) are fused
with hand-written backward passes because the composite versions are several
times slower in pure numpy.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

DTYPE = np.float64

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Var:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")
    __array_priority__ = 100

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Var, ...] = ()
        self._backward: Callable | None = None

    def __repr__(self):
        return f"Var(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        return float(self.value)

    def backward(self, grad=None):
        if not self.requires_grad:
            raise RuntimeError("backward() on a Var that does not require grad")
        if grad is None:
            if self.value.size != 1:
                raise RuntimeError("grad must be given for non-scalar outputs")
            grad = np.ones_like(self.value)
        order = _topo(self)
        grads = {id(self): np.asarray(grad, dtype=DTYPE)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # operators
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_var(other)))

    def __rsub__(self, other):
        return add(as_var(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / np.asarray(other, dtype=DTYPE))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def _topo(root: Var) -> list[Var]:
    order: list[Var] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _node(value, parents: Sequence[Var], backward: Callable) -> Var:
    rg = _grad_enabled and any(p.requires_grad for p in parents)
    out = Var(value, requires_grad=rg)
    if rg:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    sa, sb = a.shape, b.shape
    return _node(a.value + b.value, (a, b),
                 lambda g: (unbroadcast(g, sa), unbroadcast(g, sb)))


def neg(a: Var) -> Var:
    a = as_var(a)
    return _node(-a.value, (a,), lambda g: (-g,))


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    av, bv = a.value, b.value
    return _node(av * bv, (a, b),
                 lambda g: (unbroadcast(g * bv, av.shape), unbroadcast(g * av, bv.shape)))


def power(a: Var, p: float) -> Var:
    a = as_var(a)
    av = a.value
    return _node(av ** p, (a,), lambda g: (g * p * av ** (p - 1),))


def exp(a: Var) -> Var:
    a = as_var(a)
    out = np.exp(a.value)
    return _node(out, (a,), lambda g: (g * out,))


def log(a: Var) -> Var:
    a = as_var(a)
    av = a.value
    return _node(np.log(av), (a,), lambda g: (g / av,))


def sqrt(a: Var) -> Var:
    a = as_var(a)
    out = np.sqrt(a.value)
    return _node(out, (a,), lambda g: (g * 0.5 / out,))


def tanh(a: Var) -> Var:
    a = as_var(a)
    out = np.tanh(a.value)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),))


def matmul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    av, bv = a.value, b.value

    def back(g):
        ga = gb = None
        if a.requires_grad:
            ga = unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape)
        if b.requires_grad:
            gb = unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape)
        return ga, gb

    return _node(av @ bv, (a, b), back)


def linear(x, w, b=None) -> Var:
    """``x @ w + b`` for ``x`` of shape (..., in) and ``w`` of shape (in, out)."""
    x, w = as_var(x), as_var(w)
    xv, wv = x.value, w.value
    out = xv @ wv
    parents = [x, w]
    if b is not None:
        b = as_var(b)
        out = out + b.value
        parents.append(b)

    def back(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = (g @ wv.T) if x.requires_grad else None
        gw = (xv.reshape(-1, xv.shape[-1]).T @ g2) if w.requires_grad else None
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return _node(out, parents, back)


def sum_(a: Var, axis=None, keepdims=False) -> Var:
    a = as_var(a)
    shape = a.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(a.value.sum(axis=axis, keepdims=keepdims), (a,), back)


def mean(a: Var, axis=None, keepdims=False) -> Var:
    n = a.value.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return sum_(a, axis, keepdims) * (1.0 / n)


def reshape(a: Var, shape) -> Var:
    a = as_var(a)
    old = a.shape
    return _node(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a: Var, axes=None) -> Var:
    a = as_var(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _node(np.transpose(a.value, axes), (a,), lambda g: (np.transpose(g, inv),))


def swapaxes(a: Var, i: int, j: int) -> Var:
    a = as_var(a)
    return _node(np.swapaxes(a.value, i, j), (a,), lambda g: (np.swapaxes(g, i, j),))


def getitem(a: Var, idx) -> Var:
    a = as_var(a)
    shape = a.shape

    def back(g):
        out = np.zeros(shape, dtype=DTYPE)
        np.add.at(out, idx, g)
        return (out,)

    return _node(a.value[idx], (a,), back)


def concat(parts: Sequence, axis: int = 0) -> Var:
    parts = [as_var(p) for p in parts]
    sizes = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def back(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _node(np.concatenate([p.value for p in parts], axis=axis), parts, back)


def stack(parts: Sequence, axis: int = 0) -> Var:
    parts = [as_var(p) for p in parts]

    def back(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _node(np.stack([p.value for p in parts], axis=axis), parts, back)


def broadcast_to(a: Var, shape) -> Var:
    a = as_var(a)
    old = a.shape
    return _node(np.broadcast_to(a.value, shape).copy(), (a,),
                 lambda g: (unbroadcast(g, old),))


# fused ops

def softmax(x, axis: int = -1) -> Var:
    x = as_var(x)
    z = x.value - x.value.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _node(s, (x,), back)


def log_softmax(x, axis: int = -1) -> Var:
    x = as_var(x)
    z = x.value - x.value.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def back(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _node(out, (x,), back)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Var:
    x, gain, bias = as_var(x), as_var(gain), as_var(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ValueError(f"layer_norm: gain/bias shape {gain.shape}/{bias.shape} "
                         f"does not match last axis {d}")
    xv = x.value
    mu = xv.mean(axis=-1, keepdims=True)
    xc = xv - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    gv = gain.value

    def back(g):
        gx = None
        if x.requires_grad:
            dxhat = g * gv
            gx = rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                         - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        g2 = g.reshape(-1, d)
        return gx, (g2 * xhat.reshape(-1, d)).sum(axis=0), g2.sum(axis=0)

    return _node(xhat * gv + bias.value, (x, gain, bias), back)


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(x) -> Var:
    """GELU, tanh approximation."""
    x = as_var(x)
    xv = x.value
    x2 = xv * xv
    t = np.tanh(_GELU_C * xv * (1.0 + 0.044715 * x2))
    out = 0.5 * xv * (1.0 + t)

    def back(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x2)
        return (g * (0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t * t) * dinner),)

    return _node(out, (x,), back)


def l2_normalize(x, axis: int = -1) -> Var:
    x = as_var(x)
    norm = sqrt(sum_(x * x, axis=axis, keepdims=True))
    return x / norm
