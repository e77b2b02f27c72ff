"""Minimal reverse-mode differentiation over numpy arrays.

Every op builds a ``Tensor`` holding its value, its parents and a closure that
pushes the output gradient into the parents.  ``backward`` walks the graph once
in reverse topological order and then frees it.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import UsageError

BN_EPS = 1e-5
LEAKY_SLOPE = 0.01


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "_consumed", "name")

    def __init__(self, value, requires_grad=False, parents=(), backward=None, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward
        self._consumed = False
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        self.grad = g.copy() if self.grad is None else self.grad + g

    def backward(self):
        """Populate ``.grad`` of every tensor the scalar ``self`` depends on."""
        if self.value.size != 1:
            raise UsageError(f"backward needs a scalar, got shape {self.shape}")
        if self._consumed:
            raise UsageError("graph already consumed by a previous backward call")
        order, seen = [], set()
        stack = [(self, False)]
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
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        for node in order:
            if node._parents:
                node._parents = ()
                node._backward = None
                node.grad = None if node is not self else node.grad
        self._consumed = True

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def parameter(value, name=None):
    return Tensor(value, requires_grad=True, name=name)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value, parents, backward):
    return Tensor(value, parents=parents, backward=backward)


# ---------------------------------------------------------------------------
# pointwise and reductions

def leaky_relu(x: Tensor, slope=LEAKY_SLOPE):
    mask = x.value > 0
    out = np.where(mask, x.value, slope * x.value)

    def bw(g):
        x._accumulate(np.where(mask, g, slope * g))

    return _make(out, (x,), bw)


def sigmoid(x: Tensor):
    out = 0.5 * (1.0 + np.tanh(0.5 * x.value))

    def bw(g):
        x._accumulate(g * out * (1.0 - out))

    return _make(out, (x,), bw)


def add(a: Tensor, b: Tensor):
    def bw(g):
        a._accumulate(g)
        b._accumulate(g)

    return _make(a.value + b.value, (a, b), bw)


def tensor_sum(x: Tensor):
    def bw(g):
        x._accumulate(np.broadcast_to(g, x.shape))

    return _make(np.sum(x.value), (x,), bw)


def weighted_sum(x: Tensor, w):
    """``sum(x * w)`` for a constant array ``w``; injects an upstream gradient."""
    w = np.asarray(w, dtype=np.float64)

    def bw(g):
        x._accumulate(g * w)

    return _make(np.sum(x.value * w), (x,), bw)


def mse(x: Tensor, target):
    target = np.asarray(target, dtype=np.float64)
    diff = x.value - target

    def bw(g):
        x._accumulate(g * 2.0 * diff / diff.size)

    return _make(np.mean(diff * diff), (x,), bw)


# ---------------------------------------------------------------------------
# layers

def conv2d(x: Tensor, w: Tensor, b: Tensor):
    """Stride-1 'same' convolution (cross-correlation) with zero padding.

    ``x``: (N, C, H, W); ``w``: (O, C, k, k) with odd ``k``; ``b``: (O,).
    """
    N, C, H, W = x.shape
    O, Cw, k, k2 = w.shape
    if Cw != C or k != k2 or k % 2 == 0:
        raise ValueError(f"conv2d shape mismatch: input {x.shape}, weights {w.shape}")
    pad = k // 2
    xp = np.pad(x.value, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = sliding_window_view(xp, (k, k), axis=(2, 3))  # N, C, H, W, k, k
    cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(N * H * W, C * k * k)
    wmat = w.value.reshape(O, C * k * k)
    out = (cols @ wmat.T + b.value).reshape(N, H, W, O).transpose(0, 3, 1, 2)

    def bw(g):
        gm = g.transpose(0, 2, 3, 1).reshape(N * H * W, O)
        if w.requires_grad:
            w._accumulate((gm.T @ cols).reshape(w.shape))
        if b.requires_grad:
            b._accumulate(gm.sum(axis=0))
        if x.requires_grad:
            dcols = (gm @ wmat).reshape(N, H, W, C, k, k)
            dxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    dxp[:, :, i:i + H, j:j + W] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            x._accumulate(dxp[:, :, pad:pad + H, pad:pad + W])

    return _make(out, (x, w, b), bw)


def maxpool2(x: Tensor):
    N, C, H, W = x.shape
    if H % 2 or W % 2:
        raise ValueError(f"maxpool2 needs even spatial dims, got {H}x{W}")
    win = x.value.reshape(N, C, H // 2, 2, W // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(N, C, H // 2, W // 2, 4)
    arg = np.argmax(win, axis=-1)  # first maximum wins ties
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def bw(g):
        gw = np.zeros((N, C, H // 2, W // 2, 4))
        np.put_along_axis(gw, arg[..., None], g[..., None], axis=-1)
        gx = gw.reshape(N, C, H // 2, W // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(N, C, H, W)
        x._accumulate(gx)

    return _make(out, (x,), bw)


def upsample2(x: Tensor):
    N, C, H, W = x.shape
    out = np.repeat(np.repeat(x.value, 2, axis=2), 2, axis=3)

    def bw(g):
        x._accumulate(g.reshape(N, C, H, 2, W, 2).sum(axis=(3, 5)))

    return _make(out, (x,), bw)


def concat(tensors, axis=1):
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.value for t in tensors], axis=axis)

    def bw(g):
        for t, gi in zip(tensors, np.split(g, splits, axis=axis)):
            t._accumulate(gi)

    return _make(out, tuple(tensors), bw)


def batchnorm(x: Tensor, scale: Tensor, shift: Tensor, eps=BN_EPS):
    """Per-channel normalization with the statistics of the current pass."""
    C = x.shape[1]
    if scale.shape != (C,) or shift.shape != (C,):
        raise ValueError(f"batchnorm: {C} channels but parameters of shape {scale.shape}")
    axes = (0, 2, 3)
    mu = x.value.mean(axis=axes, keepdims=True)
    xc = x.value - mu
    var = (xc * xc).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    s = scale.value.reshape(1, C, 1, 1)
    out = xhat * s + shift.value.reshape(1, C, 1, 1)

    def bw(g):
        if scale.requires_grad:
            scale._accumulate((g * xhat).sum(axis=axes))
        if shift.requires_grad:
            shift._accumulate(g.sum(axis=axes))
        if x.requires_grad:
            gh = g * s
            x._accumulate(
                inv * (gh - gh.mean(axis=axes, keepdims=True)
                       - xhat * (gh * xhat).mean(axis=axes, keepdims=True))
            )

    return _make(out, (x, scale, shift), bw)


def dense(x: Tensor, w: Tensor, b: Tensor):
    """``x @ w.T + b`` with ``x``: (N, in), ``w``: (out, in)."""
    if x.shape[-1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ValueError(f"dense shape mismatch: input {x.shape}, weights {w.shape}, bias {b.shape}")
    out = x.value @ w.value.T + b.value

    def bw(g):
        if w.requires_grad:
            w._accumulate(g.T @ x.value)
        if b.requires_grad:
            b._accumulate(g.sum(axis=0))
        if x.requires_grad:
            x._accumulate(g @ w.value)

    return _make(out, (x, w, b), bw)


def conv2d_5x5(x, w, b):
    if w.shape[2:] != (5, 5):
        raise ValueError(f"expected 5x5 kernels, got {w.shape[2:]}")
    return conv2d(x, w, b)
