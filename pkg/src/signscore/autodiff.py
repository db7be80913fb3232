"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just enough machinery for the trainable pieces of this package: the
windowed smoother, the joint-hierarchy attention model, the score head,
and their losses.  Tensors wrap float64 ndarrays; ops build a graph of
closures replayed in reverse topological order by ``backward``.
Gradients accumulate into ``.grad`` (zero them between steps).

Design points worth knowing:

* broadcasting is supported everywhere through ``_unbroadcast``;
* ``softmax_masked`` keeps masked entries *exactly* zero in both the
  output and the backward pass, which the ancestry-mask soundness
  guarantee relies on;
* everything is float64 so central finite differences verify gradients
  to ~1e-6 relative.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "concat",
    "matmul",
    "softmax_masked",
    "layer_norm",
    "gather",
    "scatter_add",
    "softplus",
]


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to the operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    # -- graph plumbing ------------------------------------------------

    @classmethod
    def _node(cls, data, parents, backward):
        out = cls(data, requires_grad=any(p.requires_grad for p in parents))
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def backward(self, grad=None):
        if grad is None:
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=np.float64)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = grad if self.grad is None else self.grad + grad
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._backward(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g
            if node is not self and node._parents:
                node.grad = None  # free intermediate buffers

    def zero_grad(self):
        self.grad = None

    # -- conveniences ---------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other):
        other = _wrap(other)
        a, b = self, other
        out = Tensor._node(a.data + b.data, (a, b), lambda g: (
            _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))
        return out

    __radd__ = __add__

    def __neg__(self):
        a = self
        return Tensor._node(-a.data, (a,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-_wrap(other))

    def __rsub__(self, other):
        return _wrap(other) + (-self)

    def __mul__(self, other):
        other = _wrap(other)
        a, b = self, other
        return Tensor._node(a.data * b.data, (a, b), lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _wrap(other)
        a, b = self, other
        return Tensor._node(a.data / b.data, (a, b), lambda g: (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)))

    def __rtruediv__(self, other):
        return _wrap(other) / self

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("only scalar exponents are supported")
        a = self
        return Tensor._node(a.data**p, (a,), lambda g: (g * p * a.data ** (p - 1),))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __getitem__(self, idx):
        a = self
        data = a.data[idx]

        def back(g):
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            return (full,)

        return Tensor._node(data, (a,), back)

    # -- reductions and shaping -------------------------------------------

    def sum(self, axis=None, keepdims=False):
        a = self

        def back(g):
            if axis is None:
                return (np.broadcast_to(g, a.data.shape).copy(),)
            g2 = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(g2, a.data.shape).copy(),)

        return Tensor._node(a.data.sum(axis=axis, keepdims=keepdims), (a,), back)

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        a = self
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Tensor._node(a.data.reshape(shape), (a,),
                            lambda g: (g.reshape(a.data.shape),))

    def swapaxes(self, ax1, ax2):
        a = self
        return Tensor._node(a.data.swapaxes(ax1, ax2), (a,),
                            lambda g: (g.swapaxes(ax1, ax2),))

    def transpose(self, axes):
        a = self
        inv = np.argsort(axes)
        return Tensor._node(a.data.transpose(axes), (a,),
                            lambda g: (g.transpose(inv),))

    # -- elementwise nonlinearities ----------------------------------------

    def tanh(self):
        a = self
        out_data = np.tanh(a.data)
        return Tensor._node(out_data, (a,), lambda g: (g * (1.0 - out_data**2),))

    def exp(self):
        a = self
        out_data = np.exp(a.data)
        return Tensor._node(out_data, (a,), lambda g: (g * out_data,))

    def log(self):
        a = self
        return Tensor._node(np.log(a.data), (a,), lambda g: (g / a.data,))

    def sqrt(self):
        a = self
        out_data = np.sqrt(a.data)
        return Tensor._node(out_data, (a,), lambda g: (g * 0.5 / out_data,))

    def abs(self):
        a = self
        return Tensor._node(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must have ndim >= 2")

    def back(g):
        da = _unbroadcast(np.matmul(g, b.data.swapaxes(-1, -2)), a.data.shape)
        db = _unbroadcast(np.matmul(a.data.swapaxes(-1, -2), g), b.data.shape)
        return da, db

    return Tensor._node(np.matmul(a.data, b.data), (a, b), back)


def concat(tensors, axis=0):
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._node(np.concatenate([t.data for t in tensors], axis=axis),
                        tuple(tensors), back)


def softmax_masked(scores, mask=None):
    """Row softmax over the last axis; ``mask`` is boolean, True = attend.

    Masked entries are exactly 0.0 in the output and receive exactly-zero
    gradients.  Rows with no unmasked entry yield the zero vector.
    """
    scores = _wrap(scores)
    raw = scores.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), raw.shape)
        raw = np.where(mask, raw, -np.inf)
    mx = np.max(raw, axis=-1, keepdims=True)
    live = np.isfinite(mx)  # rows with at least one unmasked entry
    e = np.exp(raw - np.where(live, mx, 0.0))
    e = np.where(np.isfinite(raw), e, 0.0)
    denom = e.sum(axis=-1, keepdims=True)
    out_data = np.where(live, e / np.where(denom == 0.0, 1.0, denom), 0.0)

    def back(g):
        inner = (g * out_data).sum(axis=-1, keepdims=True)
        return (out_data * (g - inner),)

    return Tensor._node(out_data, (scores,), back)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize over the last axis, then scale and shift."""
    x, gamma, beta = _wrap(x), _wrap(gamma), _wrap(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = gamma.data * xhat + beta.data

    def back(g):
        dgamma = _unbroadcast(g * xhat, gamma.data.shape)
        dbeta = _unbroadcast(g, beta.data.shape)
        dxhat = g * gamma.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        return dx, dgamma, dbeta

    return Tensor._node(out_data, (x, gamma, beta), back)


def gather(x, idx, axis=-1):
    """Select indices along one axis; adjoint scatter-adds."""
    x = _wrap(x)
    idx = np.asarray(idx, dtype=np.int64)
    data = np.take(x.data, idx, axis=axis)
    ax = axis % x.data.ndim

    def back(g):
        full = np.zeros_like(x.data)
        sel = (slice(None),) * ax + (idx,)
        np.add.at(full, sel, g)
        return (full,)

    return Tensor._node(data, (x,), back)


def scatter_add(x, idx, length, axis=-1):
    """Adjoint of ``gather``: accumulate entries of ``x`` whose position
    along ``axis`` (possibly multi-dimensional ``idx``) maps to an output
    slot in ``[0, length)``.  idx must have the same trailing shape as
    the gathered axes of x."""
    x = _wrap(x)
    idx = np.asarray(idx, dtype=np.int64)
    ax = axis % x.data.ndim
    lead = x.data.shape[:ax]
    out_shape = lead + (length,)
    sel = (slice(None),) * ax + (idx,)

    data = np.zeros(out_shape, dtype=np.float64)
    np.add.at(data, sel, x.data)

    def back(g):
        return (np.take(g, idx.ravel(), axis=ax).reshape(x.data.shape)
                if idx.ndim == 1 else g[sel],)

    return Tensor._node(data, (x,), back)


def softplus(x):
    """log(1 + exp(x)), evaluated stably; gradient is the logistic sigmoid."""
    x = _wrap(x)
    data = np.logaddexp(0.0, x.data)
    sig = np.where(x.data >= 0.0,
                   1.0 / (1.0 + np.exp(-np.abs(x.data))),
                   np.exp(x.data) / (1.0 + np.exp(x.data)))

    def back(g):
        return (g * sig,)

    return Tensor._node(data, (x,), back)
