"""Orthonormal two-tap discrete wavelet transform on channel grids.

The 2D transform is separable: pairs along the width axis are filtered
first, then pairs along the height axis, keeping even-index phases. A
single analysis step maps ``(..., c, h, w)`` to a packed ``(..., 4c,
h/2, w/2)`` grid whose channel blocks are, in order,

* ``ll``  low/low approximation,
* ``lh``  width-low / height-high detail,
* ``hl``  width-high / height-low detail,
* ``hh``  width-high / height-high detail.

With orthonormal taps the synthesis step is the exact transpose of the
analysis step, so ``idwt2_step(dwt2_step(x)) == x`` up to roundoff and
the autodiff adjoint of each direction is the other one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .counting import record
from .errors import ConfigError, ShapeError
from .tensor import Tensor, grad_enabled


@dataclass(frozen=True)
class FilterPair:
    """Analysis low-pass and high-pass taps of a two-tap filter bank."""

    low: tuple
    high: tuple


# A plain python float: numpy scalars are "strong" types that would silently
# promote float32 grids to float64 inside the lifting arithmetic.
_INV_SQRT2 = float(1.0 / np.sqrt(2.0))

HAAR = FilterPair((_INV_SQRT2, _INV_SQRT2), (_INV_SQRT2, -_INV_SQRT2))

WAVELETS = {"haar": HAAR}


@dataclass(frozen=True)
class DwtConfig:
    """Decomposition depth and filter choice for a multi-level transform."""

    levels: int = 1
    wavelet: str = "haar"

    def __post_init__(self):
        if self.levels < 1:
            raise ConfigError(f"dwt levels must be >= 1, got {self.levels}")
        if self.wavelet not in WAVELETS:
            raise ConfigError(
                f"unknown wavelet {self.wavelet!r}; supported: {sorted(WAVELETS)}"
            )


def check_grid(shape, levels: int):
    """Require the trailing (h, w) axes to be divisible by 2**levels."""
    if len(shape) < 3:
        raise ShapeError(f"expected (..., c, h, w) grid, got shape {tuple(shape)}")
    h, w = shape[-2], shape[-1]
    step = 2 ** levels
    if h % step != 0:
        raise ShapeError(f"grid height {h} not divisible by 2^{levels} = {step}")
    if w % step != 0:
        raise ShapeError(f"grid width {w} not divisible by 2^{levels} = {step}")


def _taps():
    # Module-level lookup at call time so the constant can be swapped to
    # demonstrate that the invariant checks actually bite.
    return HAAR


def dwt2_raw(x: np.ndarray) -> np.ndarray:
    """One analysis level on raw arrays: ``(..., c, h, w) -> (..., 4c, h/2, w/2)``."""
    check_grid(x.shape, 1)
    fp = _taps()
    r0, r1 = fp.low
    s0, s1 = fp.high
    xe, xo = x[..., ::2], x[..., 1::2]
    lo = r0 * xe + r1 * xo
    hi = s0 * xe + s1 * xo
    record(2 * x.size)

    def cols(a):
        ae, ao = a[..., ::2, :], a[..., 1::2, :]
        return r0 * ae + r1 * ao, s0 * ae + s1 * ao

    ll, lh = cols(lo)
    hl, hh = cols(hi)
    record(2 * x.size)
    return np.concatenate([ll, lh, hl, hh], axis=-3)


def idwt2_raw(y: np.ndarray) -> np.ndarray:
    """One synthesis level on raw arrays: ``(..., 4c, hs, ws) -> (..., c, 2hs, 2ws)``."""
    if y.ndim < 3 or y.shape[-3] % 4 != 0:
        raise ShapeError(f"packed subband grid needs 4k channels, got shape {y.shape}")
    fp = _taps()
    r0, r1 = fp.low
    s0, s1 = fp.high
    c = y.shape[-3] // 4
    ll, lh, hl, hh = (y[..., i * c:(i + 1) * c, :, :] for i in range(4))
    hs, ws = y.shape[-2], y.shape[-1]

    def rows(a, b):
        out = np.empty(a.shape[:-2] + (2 * hs, ws), dtype=y.dtype)
        out[..., ::2, :] = r0 * a + s0 * b
        out[..., 1::2, :] = r1 * a + s1 * b
        return out

    lo = rows(ll, lh)
    hi = rows(hl, hh)
    record(2 * lo.size + 2 * hi.size)
    x = np.empty(lo.shape[:-1] + (2 * ws,), dtype=y.dtype)
    x[..., ::2] = r0 * lo + s0 * hi
    x[..., 1::2] = r1 * lo + s1 * hi
    record(2 * x.size)
    return x


def dwt2_step(x: Tensor) -> Tensor:
    """Differentiable single analysis level; adjoint is the synthesis step."""
    out = dwt2_raw(x.data)

    def backward(g):
        x.accumulate_grad(idwt2_raw(g))

    if not (grad_enabled() and x.requires_grad):
        return Tensor(out)
    return Tensor(out, requires_grad=True, _parents=(x,), _backward=backward)


def idwt2_step(y: Tensor) -> Tensor:
    """Differentiable single synthesis level; adjoint is the analysis step."""
    out = idwt2_raw(y.data)

    def backward(g):
        y.accumulate_grad(dwt2_raw(g))

    if not (grad_enabled() and y.requires_grad):
        return Tensor(out)
    return Tensor(out, requires_grad=True, _parents=(y,), _backward=backward)


@dataclass
class SubbandSet:
    """Multi-level decomposition: coarsest approximation plus detail triples.

    ``details[i]`` holds the ``(lh, hl, hh)`` tensors of level ``i + 1``,
    finest first; ``ll`` lives at level ``len(details)``.
    """

    ll: Tensor
    details: list = field(default_factory=list)

    @property
    def levels(self) -> int:
        return len(self.details)


def decompose(x: Tensor, levels: int) -> SubbandSet:
    """Differentiable ``levels``-deep analysis of a ``(..., c, h, w)`` grid."""
    from . import ops

    check_grid(x.shape, levels)
    c = x.shape[-3]
    details = []
    approx = x
    for _ in range(levels):
        packed = dwt2_step(approx)
        approx = ops.getitem(packed, (Ellipsis, slice(0, c), slice(None), slice(None)))
        triple = tuple(
            ops.getitem(packed, (Ellipsis, slice(i * c, (i + 1) * c), slice(None), slice(None)))
            for i in (1, 2, 3)
        )
        details.append(triple)
    return SubbandSet(ll=approx, details=details)


def reconstruct(bands: SubbandSet) -> Tensor:
    """Differentiable synthesis; inverse of :func:`decompose`."""
    from . import ops

    approx = bands.ll
    for lh, hl, hh in reversed(bands.details):
        packed = ops.concat((approx, lh, hl, hh), axis=-3)
        approx = idwt2_step(packed)
    return approx
