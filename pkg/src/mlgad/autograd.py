"""Reverse-mode differentiation over numpy arrays.

Every operation on a `Tensor` records its parents and a closure mapping the
output gradient to parent gradients. `Tensor.backward` walks the recorded
graph once; `grad` does the same without touching ``.grad`` so several
losses sharing a subgraph can be differentiated separately.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_fn", "_done", "name")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._fn = _fn
        self._done = False
        self.name = name

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    # elementwise arithmetic

    def __add__(self, other):
        other = _lift(other)
        return Tensor(self.data + other.data, _parents=(self, other),
                      _fn=lambda g: (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape)))

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.data, _parents=(self,), _fn=lambda g: (-g,))

    def __sub__(self, other):
        return self + (-_lift(other))

    def __rsub__(self, other):
        return _lift(other) + (-self)

    def __mul__(self, other):
        other = _lift(other)
        a, b = self.data, other.data
        return Tensor(a * b, _parents=(self, other),
                      _fn=lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)))

    __rmul__ = __mul__

    def __matmul__(self, other):
        a, b = self.data, other.data
        return Tensor(a @ b, _parents=(self, other), _fn=lambda g: (g @ b.T, a.T @ g))

    def __getitem__(self, idx):
        shape = self.shape
        out = self.data[idx]
        if np.ndim(out) == 0:
            out = np.reshape(out, (1, 1))

        def fn(g):
            full = np.zeros(shape)
            np.add.at(full, idx, np.reshape(g, np.shape(self.data[idx])))
            return (full,)

        return Tensor(out, _parents=(self,), _fn=fn)

    # reductions and pointwise functions

    def sum(self):
        shape = self.shape
        return Tensor(np.reshape(self.data.sum(), (1, 1)), _parents=(self,),
                      _fn=lambda g: (np.broadcast_to(np.reshape(g, ()), shape).copy(),))

    def mean(self):
        return self.sum() * (1.0 / self.size)

    def leaky_relu(self, slope=0.01):
        x = self.data
        pos = x > 0
        return Tensor(np.where(pos, x, slope * x), _parents=(self,),
                      _fn=lambda g: (np.where(pos, g, slope * g),))

    def sigmoid(self):
        x = self.data
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return Tensor(out, _parents=(self,), _fn=lambda g: (g * out * (1.0 - out),))

    def log(self):
        x = self.data
        return Tensor(np.log(x), _parents=(self,), _fn=lambda g: (g / x,))

    def clip(self, lo, hi):
        x = self.data
        inside = (x >= lo) & (x <= hi)
        return Tensor(np.clip(x, lo, hi), _parents=(self,), _fn=lambda g: (g * inside,))

    # differentiation

    def backward(self):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf parameter."""
        if self._done:
            raise RuntimeError("backward already ran on this tensor; rebuild the graph first")
        leaves, grads = _run_backward(self)
        for leaf in leaves:
            g = grads.get(id(leaf))
            if g is None:
                g = np.zeros(leaf.shape)
            leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
        self._done = True


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _topo(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
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


def _run_backward(root: Tensor):
    if root.size != 1:
        raise ValueError(f"backward needs a scalar, got shape {root.shape}")
    if not root.requires_grad:
        raise ValueError("loss does not depend on any parameter requiring gradients")
    order = _topo(root)
    grads = {id(root): np.ones(root.shape)}
    leaves = []
    for node in reversed(order):
        g = grads.pop(id(node), None) if node._parents else grads.get(id(node))
        if not node._parents:
            leaves.append(node)
            continue
        if g is None:
            continue
        for p, pg in zip(node._parents, node._fn(g)):
            if not p.requires_grad:
                continue
            prev = grads.get(id(p))
            grads[id(p)] = pg if prev is None else prev + pg
    return leaves, grads


def grad(loss: Tensor, params) -> list[np.ndarray]:
    """Gradients of scalar `loss` w.r.t. `params` (zeros where disconnected)."""
    _, grads = _run_backward(loss)
    return [grads.get(id(p), np.zeros(p.shape)).copy() if id(p) in grads
            else np.zeros(p.shape) for p in params]


def spmm(matrix, t: Tensor) -> Tensor:
    """Constant (sparse or dense) matrix times tensor."""
    M = matrix if sp.issparse(matrix) else np.asarray(matrix, dtype=np.float64)
    out = np.asarray(M @ t.data)
    return Tensor(out, _parents=(t,), _fn=lambda g: (np.asarray(M.T @ g),))


def zero_grad(params) -> None:
    for p in params:
        p.grad = None
