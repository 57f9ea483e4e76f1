"""Differentiable primitive operations.

Every function takes and returns :class:`~wavemix.tensor.Tensor` and, while
gradients are enabled, records a backward closure on the output. Gradients
are accumulated into parents via ``accumulate_grad``.

Shape convention: grid operations act on the trailing ``(channels, H, W)``
axes and are indifferent to leading batch axes.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import ndtr

from .counting import record
from .errors import DataError, ShapeError
from .tensor import Tensor, grad_enabled

INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _result(data, parents, backward) -> Tensor:
    requires = grad_enabled() and any(p.requires_grad for p in parents)
    if not requires:
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape``, undoing numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- arithmetic ---------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    return _result(out, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g, b.shape))

    return _result(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.shape))

    return _result(out, (a, b), backward)


def scale(x: Tensor, c: float) -> Tensor:
    out = x.data * c

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * c)

    return _result(out, (x,), backward)


def neg(x: Tensor) -> Tensor:
    return scale(x, -1.0)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data @ b.data
    record(out.size * a.shape[-1])

    def backward(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            a.accumulate_grad(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b.accumulate_grad(_unbroadcast(gb, b.shape))

    return _result(out, (a, b), backward)


# -- shape manipulation -------------------------------------------------------


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = x.data.reshape(shape)

    def backward(g):
        x.accumulate_grad(g.reshape(x.shape))

    return _result(out, (x,), backward)


def moveaxis(x: Tensor, src: int, dst: int) -> Tensor:
    out = np.moveaxis(x.data, src, dst)

    def backward(g):
        x.accumulate_grad(np.moveaxis(g, dst, src))

    return _result(out, (x,), backward)


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    out = x.data.transpose(axes)
    inv = tuple(np.argsort(axes))

    def backward(g):
        x.accumulate_grad(np.ascontiguousarray(g.transpose(inv)))

    return _result(out, (x,), backward)


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    out = np.swapaxes(x.data, a, b)

    def backward(g):
        x.accumulate_grad(np.swapaxes(g, a, b))

    return _result(out, (x,), backward)


def getitem(x: Tensor, key) -> Tensor:
    """Basic (non-fancy) slicing; backward scatters into the sliced region."""
    out = x.data[key]

    def backward(g):
        buf = np.zeros_like(x.data)
        buf[key] = g
        x.accumulate_grad(buf)

    return _result(out, (x,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    edges = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, edges[:-1], edges[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(int(lo), int(hi))
                t.accumulate_grad(g[tuple(idx)])

    return _result(out, tensors, backward)


# -- reductions ---------------------------------------------------------------


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            x.accumulate_grad(np.broadcast_to(g, x.shape).copy())
            return
        gg = g
        if not keepdims:
            gg = np.expand_dims(gg, axis)
        x.accumulate_grad(np.broadcast_to(gg, x.shape).copy())

    return _result(out, (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.size
    elif isinstance(axis, tuple):
        n = int(np.prod([x.shape[a] for a in axis]))
    else:
        n = x.shape[axis]
    s = sum_(x, axis=axis, keepdims=keepdims)
    return scale(s, 1.0 / n)


# -- nonlinearities -----------------------------------------------------------


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-CDF GeLU: x * Phi(x), erf-based (no tanh approximation)."""
    phi = ndtr(x.data)
    out = x.data * phi

    def backward(g):
        pdf = np.exp(-0.5 * x.data * x.data) * INV_SQRT_2PI
        x.accumulate_grad(g * (phi + x.data * pdf))

    return _result(out, (x,), backward)


def identity(x: Tensor) -> Tensor:
    """Pass-through; stands in for gelu in linearity tests."""
    return x


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Stable softmax along ``axis`` (max-subtraction)."""
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        x.accumulate_grad(out * (g - dot))

    return _result(out, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5, axis: int = -3) -> Tensor:
    """Normalize over the channel axis per spatial token, then affine.

    For a ``(..., d, h, w)`` grid the default ``axis=-3`` normalizes each
    token's d-vector to zero mean / unit (population) variance before
    applying per-channel ``gain`` and ``bias``.
    """
    axis = axis % x.ndim - x.ndim  # canonical negative axis
    d = x.shape[axis]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm affine shapes {gain.shape}/{bias.shape} do not match channel dim {d}"
        )
    bshape = (d,) + (1,) * (-axis - 1)
    gb = gain.data.reshape(bshape)
    bb = bias.data.reshape(bshape)

    mu = x.data.mean(axis=axis, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = gb * xhat + bb

    def backward(g):
        if gain.requires_grad:
            red = tuple(i for i in range(g.ndim) if i != g.ndim + axis)
            gain.accumulate_grad((g * xhat).sum(axis=red))
        if bias.requires_grad:
            red = tuple(i for i in range(g.ndim) if i != g.ndim + axis)
            bias.accumulate_grad(g.sum(axis=red))
        if x.requires_grad:
            gh = g * gb
            m1 = gh.mean(axis=axis, keepdims=True)
            m2 = (gh * xhat).mean(axis=axis, keepdims=True)
            x.accumulate_grad(inv * (gh - m1 - xhat * m2))

    return _result(out, (x, gain, bias), backward)


# -- losses ---------------------------------------------------------------


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log softmax probability of the true class.

    ``logits`` is ``(C,)`` with an int label or ``(B, C)`` with ``(B,)``
    labels; returns a scalar.
    """
    data = logits.data
    squeeze = data.ndim == 1
    if squeeze:
        data = data[None, :]
        labels = np.asarray([labels])
    else:
        labels = np.asarray(labels)
    b, c = data.shape
    if labels.min() < 0 or labels.max() >= c:
        bad = int(np.argmax((labels < 0) | (labels >= c)))
        raise DataError(f"label {int(labels[bad])} out of range [0, {c}) at index {bad}")

    m = data.max(axis=1, keepdims=True)
    z = data - m
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    nll = lse[:, 0] - z[np.arange(b), labels]
    out = nll.mean()

    def backward(g):
        p = np.exp(z - lse)
        p[np.arange(b), labels] -= 1.0
        p *= float(np.ravel(g)[0]) / b
        logits.accumulate_grad(p[0] if squeeze else p)

    return _result(np.asarray(out, dtype=data.dtype), (logits,), backward)


# -- grouped convolution -------------------------------------------------


def _check_conv_shapes(x_shape, w_shape, groups: int):
    if len(w_shape) != 4:
        raise ShapeError(f"conv weight must be rank 4, got {w_shape}")
    c_out, c_in_g, kh, kw = w_shape
    if kh != kw:
        raise ShapeError(f"conv kernel must be square, got {kh}x{kw}")
    if kh % 2 != 1:
        raise ShapeError(f"conv kernel size must be odd for same-padding, got {kh}")
    if len(x_shape) < 3:
        raise ShapeError(f"conv input must have (channels, H, W) trailing axes, got {x_shape}")
    c_in = x_shape[-3]
    if groups < 1:
        raise ShapeError(f"groups must be >= 1, got {groups}")
    if c_in % groups != 0:
        raise ShapeError(f"input channels {c_in} not divisible by groups {groups}")
    if c_out % groups != 0:
        raise ShapeError(f"output channels {c_out} not divisible by groups {groups}")
    if c_in_g != c_in // groups:
        raise ShapeError(
            f"weight expects {c_in_g} channels per group, input provides {c_in // groups}"
        )
    return c_in, c_out, kh


def conv2d_raw(x: np.ndarray, w: np.ndarray, groups: int) -> np.ndarray:
    """Same-padded stride-1 grouped cross-correlation on raw arrays.

    ``x`` is ``(L, c_in, H, W)``; ``w`` is ``(c_out, c_in/groups, k, k)``.
    """
    ell, c_in, h, wd = x.shape
    c_out, c_in_g, k, _ = w.shape
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # (L, c_in, H, W, k, k)
    c_out_g = c_out // groups
    out = np.empty((ell, c_out, h, wd), dtype=x.dtype)
    for gi in range(groups):
        wg = w[gi * c_out_g:(gi + 1) * c_out_g].reshape(c_out_g, c_in_g * k * k)
        xg = np.moveaxis(win[:, gi * c_in_g:(gi + 1) * c_in_g], 1, 3)
        cols = xg.reshape(ell, h * wd, c_in_g * k * k)
        og = cols @ wg.T
        out[:, gi * c_out_g:(gi + 1) * c_out_g] = np.moveaxis(og, 2, 1).reshape(
            ell, c_out_g, h, wd
        )
    record(ell * c_out * h * wd * c_in_g * k * k)
    return out


def _conv2d_grad_w(x: np.ndarray, g: np.ndarray, w_shape, groups: int) -> np.ndarray:
    ell, c_in, h, wd = x.shape
    c_out, c_in_g, k, _ = w_shape
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    c_out_g = c_out // groups
    gw = np.empty(w_shape, dtype=x.dtype)
    for gi in range(groups):
        xg = np.moveaxis(win[:, gi * c_in_g:(gi + 1) * c_in_g], 1, 3)
        cols = xg.reshape(ell, h * wd, c_in_g * k * k)
        gg = g[:, gi * c_out_g:(gi + 1) * c_out_g].reshape(ell, c_out_g, h * wd)
        acc = gg @ cols
        gw[gi * c_out_g:(gi + 1) * c_out_g] = acc.sum(axis=0).reshape(c_out_g, c_in_g, k, k)
    record(ell * c_out * h * wd * c_in_g * k * k)
    return gw


def _conv2d_weight_adjoint(w: np.ndarray, groups: int) -> np.ndarray:
    """Kernel that turns the input gradient into a grouped conv of the output
    gradient: per group, swap in/out channels and rotate the taps 180 degrees."""
    c_out, c_in_g, k, _ = w.shape
    c_out_g = c_out // groups
    blocks = []
    for gi in range(groups):
        wg = w[gi * c_out_g:(gi + 1) * c_out_g]          # (c_out_g, c_in_g, k, k)
        blocks.append(np.swapaxes(wg, 0, 1)[:, :, ::-1, ::-1])
    return np.ascontiguousarray(np.concatenate(blocks, axis=0))


def grouped_conv2d(x: Tensor, weight: Tensor, groups: int = 1) -> Tensor:
    """Same-padded stride-1 grouped 2D cross-correlation, no bias.

    Input ``(..., c_in, H, W)`` with weight ``(c_out, c_in/groups, k, k)``
    (square odd kernel) yields ``(..., c_out, H, W)``.
    """
    c_in, c_out, _ = _check_conv_shapes(x.shape, weight.shape, groups)
    lead = x.shape[:-3]
    h, wd = x.shape[-2:]
    xr = x.data.reshape((-1, c_in, h, wd))
    out = conv2d_raw(xr, weight.data, groups).reshape(lead + (c_out, h, wd))

    def backward(g):
        gr = g.reshape((-1, c_out, h, wd))
        if weight.requires_grad:
            weight.accumulate_grad(_conv2d_grad_w(xr, gr, weight.shape, groups))
        if x.requires_grad:
            w_hat = _conv2d_weight_adjoint(weight.data, groups)
            gx = conv2d_raw(gr, w_hat, groups)
            x.accumulate_grad(gx.reshape(x.shape))

    return _result(out, (x, weight), backward)
