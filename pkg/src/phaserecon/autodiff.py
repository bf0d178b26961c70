"""A small reverse-mode differentiation tape over numpy arrays.

Each :class:`Tensor` produced by an op remembers its parents and a closure that
pushes its gradient back to them. ``loss.backward()`` walks the recorded graph
in reverse topological order. Only what the networks in this package need is
implemented: elementwise arithmetic, reductions, 1-D convolution, the two
rectifier variants, dense layers, channel concatenation and a fixed inverse-STFT
block.
"""
from __future__ import annotations

import numpy as np

from . import spectral as sp
from .errors import GraphNotRecorded, NonFiniteActivation, ShapeMismatch


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_released", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward=None, name=None):
        data = np.asarray(data)
        # float32 is kept as-is (reduced-precision training); everything else is float64
        self.data = data if data.dtype == np.float32 else data.astype(np.float64, copy=False)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self._released = False
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None, retain_graph=False):
        """Accumulate d(self)/d(leaf) into every leaf's ``.grad``."""
        if not self.requires_grad or self._released:
            raise GraphNotRecorded("no recorded graph behind this tensor")
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatch("backward() without a seed gradient needs a scalar")
            grad = np.ones_like(self.data)
        order = _topological(self)
        # intermediate grads are scratch space; leaves keep accumulating
        for node in order:
            if node._backward is not None:
                node.grad = None
        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        if not retain_graph:
            for node in order:
                if node._backward is not None:
                    node._backward = None
                    node._parents = ()
                    node._released = True

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __pow__(self, p):
        if p != 2:
            raise NotImplementedError("only squaring is supported")
        return square(self)

    def sum(self):
        return total(self)

    def mean(self):
        return total(self) * (1.0 / self.data.size)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name=None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def _topological(root):
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
        for p in reversed(node._parents):
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _result_dtype(*tensors):
    """Constants follow the dtype of the differentiable operands."""
    live = [t.data.dtype for t in tensors if t.requires_grad]
    return np.result_type(*live) if live else None


def _make(data, parents, backward, check=True, dtype=None):
    if dtype is not None:
        data = data.astype(dtype, copy=False)
    if check and not np.all(np.isfinite(data)):
        raise NonFiniteActivation("non-finite value produced in forward pass")
    parents = tuple(p for p in parents if isinstance(p, Tensor))
    live = any(p.requires_grad for p in parents)
    if not live:
        return Tensor(data)
    return Tensor(data, requires_grad=True, parents=parents, backward=backward)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- elementwise -------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), backward, dtype=_result_dtype(a, b))


def neg(a):
    def backward(g):
        a._accumulate(-g)

    return _make(-a.data, (a,), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward, dtype=_result_dtype(a, b))


def square(a):
    def backward(g):
        a._accumulate(2.0 * a.data * g)

    return _make(a.data * a.data, (a,), backward)


def total(a):
    def backward(g):
        a._accumulate(np.broadcast_to(g, a.shape))

    return _make(np.sum(a.data), (a,), backward)


def sum_per_item(a):
    """(B, ...) -> (B,) sum over all non-batch axes."""
    axes = tuple(range(1, a.data.ndim))

    def backward(g):
        a._accumulate(np.broadcast_to(g.reshape((-1,) + (1,) * len(axes)), a.shape))

    return _make(a.data.sum(axis=axes), (a,), backward)


def leaky_relu(x, slope):
    pos = x.data >= 0

    def backward(g):
        x._accumulate(np.where(pos, g, slope * g))

    return _make(np.where(pos, x.data, slope * x.data), (x,), backward)


def prelu(x, a):
    """Parametric rectifier; ``a`` has shape (C,) for per-channel slopes or (1,)."""
    pos = x.data >= 0
    a_b = a.data.reshape(1, -1, 1)

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.where(pos, g, a_b * g))
        if a.requires_grad:
            ga = np.where(pos, 0.0, g * x.data).sum(axis=(0, 2))
            a._accumulate(ga if a.shape[0] > 1 else np.array([ga.sum()]))

    return _make(np.where(pos, x.data, a_b * x.data), (x, a), backward)


# -- structural ----------------------------------------------------------------

def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from exc
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    return _make(out, tensors, backward, check=False)


def conv1d(x, w, b, stride=1, padding=0):
    """x (B, C, L), w (O, C, K), b (O,) -> (B, O, floor((L + 2p - K)/s) + 1)."""
    B, C, L = x.shape
    O, Cw, K = w.shape
    if C != Cw:
        raise ShapeMismatch(f"conv expects {Cw} input channels, got {C}")
    Lp = L + 2 * padding
    Lout = (Lp - K) // stride + 1
    if Lout < 1:
        raise ShapeMismatch(f"conv output length would be {Lout}")
    dtype = np.result_type(x.data, w.data)
    xp = np.zeros((B, C, Lp), dtype=dtype)
    xp[:, :, padding:padding + L] = x.data
    cols = np.lib.stride_tricks.sliding_window_view(xp, K, axis=2)[:, :, ::stride, :][:, :, :Lout, :]
    cols = np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(B * Lout, C * K)
    wm = w.data.reshape(O, C * K)
    out = (cols @ wm.T + b.data).reshape(B, Lout, O).transpose(0, 2, 1)

    def backward(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(B * Lout, O)
        if w.requires_grad:
            w._accumulate((g2.T @ cols).reshape(O, C, K))
        if b.requires_grad:
            b._accumulate(g2.sum(axis=0))
        if x.requires_grad:
            # (B, C, K, Lout) so that each tap's contribution is a contiguous block
            dcols = np.ascontiguousarray((g2 @ wm).reshape(B, Lout, C, K).transpose(0, 2, 3, 1))
            dxp = np.zeros((B, C, Lp), dtype=dtype)
            span = stride * (Lout - 1) + 1
            for k in range(K):
                dxp[:, :, k:k + span:stride] += dcols[:, :, k, :]
            x._accumulate(dxp[:, :, padding:padding + L])

    return _make(np.ascontiguousarray(out), (x, w, b), backward)


def linear(x, w, b):
    """Fully connected: x (B, C, L) flattened per item, w (out, C*L) -> (B, out, 1)."""
    B = x.shape[0]
    flat = x.data.reshape(B, -1)
    if flat.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"dense layer expects {w.shape[1]} inputs, got {flat.shape[1]}")
    out = flat @ w.data.T + b.data

    def backward(g):
        g = g.reshape(B, -1)
        if w.requires_grad:
            w._accumulate(g.T @ flat)
        if b.requires_grad:
            b._accumulate(g.sum(axis=0))
        if x.requires_grad:
            x._accumulate((g @ w.data).reshape(x.shape))

    return _make(out[:, :, None], (x, w, b), backward)


def istft_block(x, cfg: sp.StftConfig, edge_floor: float = 0.0):
    """Fixed least-squares synthesis: (B, 2F', N) stacked [real; imag] -> (B, 1, T)."""
    B, ch, N = x.shape
    F = cfg.n_bins
    if ch != 2 * F:
        raise ShapeMismatch(f"synthesis block expects {2 * F} channels, got {ch}")
    spec = x.data[:, :F, :] + 1j * x.data[:, F:, :]
    y = sp.istft_array(spec, cfg, edge_floor)
    inv_wsum = sp.synthesis_weights(cfg, N, edge_floor)
    window = sp.make_window(cfg)
    scale = np.full(F, 2.0 / cfg.fft_size)
    scale[0] = 1.0 / cfg.fft_size
    if cfg.fft_size % 2 == 0:
        scale[-1] = 1.0 / cfg.fft_size

    def backward(g):
        g = g[:, 0, :] * inv_wsum
        frames = np.lib.stride_tricks.sliding_window_view(g, cfg.win_len, axis=-1)[:, ::cfg.hop, :]
        G = np.fft.rfft(frames * window, n=cfg.fft_size, axis=-1) * scale  # (B, N, F)
        G = G.transpose(0, 2, 1)
        gi = G.imag.copy()
        gi[:, 0, :] = 0.0
        if cfg.fft_size % 2 == 0:
            gi[:, -1, :] = 0.0
        x._accumulate(np.concatenate([G.real, gi], axis=1))

    return _make(y[:, None, :].astype(x.data.dtype, copy=False), (x,), backward)
