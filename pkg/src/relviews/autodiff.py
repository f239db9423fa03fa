"""Minimal reverse-mode tape over numpy arrays.

Deliberately not a general autodiff framework: only the vectorized ops the
graph encoder, cost head, and edit-distance computations need. Values are
float64 throughout; gradients are accumulated on leaf Vars created with
``requires_grad=True``.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "Var", "constant", "leaf", "backward", "backward_from",
    "matmul", "concat", "gather_rows", "reshape", "vsum", "vmean",
    "exp", "log", "sqrt", "square", "tanh", "leaky_relu", "softplus",
    "l2norm_last", "pairwise_l2", "reduce_min", "where_select",
]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum out axes that were broadcast so grad matches the original shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad.reshape(shape)


class Var:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad=False, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return _add(self, _wrap(other))

    def __radd__(self, other):
        return _add(_wrap(other), self)

    def __sub__(self, other):
        return _sub(self, _wrap(other))

    def __rsub__(self, other):
        return _sub(_wrap(other), self)

    def __mul__(self, other):
        return _mul(self, _wrap(other))

    def __rmul__(self, other):
        return _mul(_wrap(other), self)

    def __truediv__(self, other):
        return _div(self, _wrap(other))

    def __rtruediv__(self, other):
        return _div(_wrap(other), self)

    def __neg__(self):
        return _mul(self, _wrap(-1.0))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))


def constant(value) -> Var:
    return Var(value, requires_grad=False)


def leaf(value) -> Var:
    return Var(value, requires_grad=True)


def _wrap(x) -> Var:
    return x if isinstance(x, Var) else Var(x, requires_grad=False)


def _node(value, parents, backward) -> Var:
    rg = any(p.requires_grad for p in parents)
    if not rg:
        return Var(value, requires_grad=False)
    return Var(value, requires_grad=True, parents=parents, backward=backward)


def _add(a: Var, b: Var) -> Var:
    def bk(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return _node(a.value + b.value, (a, b), bk)


def _sub(a: Var, b: Var) -> Var:
    def bk(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return _node(a.value - b.value, (a, b), bk)


def _mul(a: Var, b: Var) -> Var:
    def bk(g):
        return _unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)
    return _node(a.value * b.value, (a, b), bk)


def _div(a: Var, b: Var) -> Var:
    def bk(g):
        return (_unbroadcast(g / b.value, a.shape),
                _unbroadcast(-g * a.value / (b.value * b.value), b.shape))
    return _node(a.value / b.value, (a, b), bk)


def matmul(a: Var, b: Var) -> Var:
    def bk(g):
        ga = g @ b.value.T if a.requires_grad else None
        gb = a.value.T @ g if b.requires_grad else None
        return ga, gb
    return _node(a.value @ b.value, (a, b), bk)


def reshape(a: Var, shape) -> Var:
    old = a.shape

    def bk(g):
        return (g.reshape(old),)
    return _node(a.value.reshape(shape), (a,), bk)


def concat(vs: list[Var], axis: int) -> Var:
    sizes = [v.value.shape[axis] for v in vs]

    def bk(g):
        return tuple(np.split(g, np.cumsum(sizes)[:-1], axis=axis))
    return _node(np.concatenate([v.value for v in vs], axis=axis), tuple(vs), bk)


def gather_rows(a: Var, idx) -> Var:
    idx = np.asarray(idx, dtype=np.intp)

    def bk(g):
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return (out,)
    return _node(a.value[idx], (a,), bk)


def vsum(a: Var, axis=None, keepdims=False) -> Var:
    def bk(g):
        if axis is None:
            return (np.full_like(a.value, 1.0) * g,)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)
    return _node(a.value.sum(axis=axis, keepdims=keepdims), (a,), bk)


def vmean(a: Var, axis=None, keepdims=False) -> Var:
    if axis is None:
        count = a.value.size
    else:
        count = a.shape[axis]

    def bk(g):
        if axis is None:
            return (np.full_like(a.value, 1.0) * g / count,)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy() / count,)
    return _node(a.value.mean(axis=axis, keepdims=keepdims), (a,), bk)


def exp(a: Var) -> Var:
    val = np.exp(a.value)

    def bk(g):
        return (g * val,)
    return _node(val, (a,), bk)


def log(a: Var) -> Var:
    def bk(g):
        return (g / a.value,)
    return _node(np.log(a.value), (a,), bk)


def sqrt(a: Var) -> Var:
    val = np.sqrt(a.value)

    def bk(g):
        return (g * 0.5 / val,)
    return _node(val, (a,), bk)


def square(a: Var) -> Var:
    def bk(g):
        return (g * 2.0 * a.value,)
    return _node(a.value * a.value, (a,), bk)


def tanh(a: Var) -> Var:
    val = np.tanh(a.value)

    def bk(g):
        return (g * (1.0 - val * val),)
    return _node(val, (a,), bk)


def leaky_relu(a: Var, slope: float) -> Var:
    pos = a.value > 0

    def bk(g):
        return (g * np.where(pos, 1.0, slope),)
    return _node(np.where(pos, a.value, slope * a.value), (a,), bk)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    p = x >= 0
    out[p] = 1.0 / (1.0 + np.exp(-x[p]))
    ex = np.exp(x[~p])
    out[~p] = ex / (1.0 + ex)
    return out


def softplus(a: Var) -> Var:
    def bk(g):
        return (g * _sigmoid(a.value),)
    return _node(np.logaddexp(0.0, a.value), (a,), bk)


def l2norm_last(a: Var) -> Var:
    """Euclidean norm along the last axis; subgradient 0 at the origin."""
    val = np.sqrt(np.square(a.value).sum(axis=-1))

    def bk(g):
        safe = np.where(val == 0.0, 1.0, val)
        scale = np.where(val == 0.0, 0.0, g / safe)
        return (scale[..., None] * a.value,)
    return _node(val, (a,), bk)


def pairwise_l2(u: Var, v: Var) -> Var:
    """All-pairs Euclidean distances, (m, d) x (p, d) -> (m, p).

    Exact forward via explicit differences; the backward uses the closed
    form dU = diag(W 1) u - W v with W = g / dist (0 where dist is 0).
    """
    diff = u.value[:, None, :] - v.value[None, :, :]
    val = np.sqrt(np.square(diff).sum(axis=-1))

    def bk(g):
        w = np.where(val == 0.0, 0.0, g / np.where(val == 0.0, 1.0, val))
        gu = w.sum(axis=1)[:, None] * u.value - w @ v.value if u.requires_grad else None
        gv = w.sum(axis=0)[:, None] * v.value - w.T @ u.value if v.requires_grad else None
        return gu, gv
    return _node(val, (u, v), bk)


def reduce_min(a: Var, axis: int) -> Var:
    """Min along an axis; gradient flows only to the recorded argmin slots."""
    arg = a.value.argmin(axis=axis)
    val = np.take_along_axis(a.value, np.expand_dims(arg, axis), axis=axis).squeeze(axis)

    def bk(g):
        out = np.zeros_like(a.value)
        np.put_along_axis(out, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis)
        return (out,)
    v = _node(val, (a,), bk)
    return v


def where_select(cond: np.ndarray, a: Var, b: Var) -> Var:
    """Elementwise pick from a where cond else b; cond is a detached mask."""
    cond = np.asarray(cond, dtype=bool)

    def bk(g):
        return (_unbroadcast(np.where(cond, g, 0.0), a.shape),
                _unbroadcast(np.where(cond, 0.0, g), b.shape))
    return _node(np.where(cond, a.value, b.value), (a, b), bk)


def _toposort(roots: list[Var]) -> list[Var]:
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(r, False) for r in roots]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward_from(seeds: list[tuple[Var, np.ndarray]]) -> None:
    """Backpropagate from several roots with given upstream gradients."""
    roots = [v for v, _ in seeds if v.requires_grad]
    order = _toposort(roots)
    for v, g in seeds:
        if not v.requires_grad:
            continue
        g = np.asarray(g, dtype=np.float64)
        v.grad = g.copy() if v.grad is None else v.grad + g
    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        grads = node._backward(node.grad)
        for p, g in zip(node._parents, grads):
            if g is None or not p.requires_grad:
                continue
            if p.grad is None:
                # copy: a backward fn may hand the same array to two parents
                p.grad = np.array(g)
            else:
                p.grad += g


def backward(root: Var, seed=None) -> None:
    if seed is None:
        seed = np.ones_like(root.value)
    backward_from([(root, seed)])
