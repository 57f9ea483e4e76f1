"""Discrete Fourier transforms and a learnable half-spectrum filter.

The 1D transform is an iterative radix-2 Cooley-Tukey FFT (bit-reversal
reordering, then log2(n) butterfly stages), vectorized over leading
axes. Lengths that are not powers of two fall back to a dense DFT
matrix product. The forward transform is unnormalized; the inverse
carries the 1/n factor, so a 2D round trip scales by 1/(h*w) exactly
once.

``spectral_filter`` implements per-channel global mixing: multiply the
full 2D spectrum by a filter stored on the non-redundant half spectrum
(w//2 + 1 columns) and return the real part of the inverse transform.
Hermitian expansion of the stored half guarantees a real result for
real input.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .counting import record
from .errors import ShapeError
from .tensor import Tensor, grad_enabled


@lru_cache(maxsize=None)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx = idx >> 1
    return rev


def _complex_dtype(dt) -> np.dtype:
    return np.dtype(np.complex64) if np.dtype(dt) in (np.float32, np.complex64) else np.dtype(
        np.complex128
    )


def fft(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Transform along the last axis; inverse includes the 1/n factor."""
    n = x.shape[-1]
    cdt = _complex_dtype(x.dtype)
    sign = 1.0 if inverse else -1.0
    if n > 0 and n & (n - 1) == 0:
        y = np.ascontiguousarray(x[..., _bit_reversal(n)], dtype=cdt)
        m = 2
        while m <= n:
            half = m // 2
            tw = np.exp(sign * 2j * np.pi * np.arange(half) / m).astype(cdt)
            blocks = y.reshape(x.shape[:-1] + (n // m, m))
            even = blocks[..., :half]
            t = blocks[..., half:] * tw
            upper = even + t
            lower = even - t
            blocks[..., :half] = upper
            blocks[..., half:] = lower
            m *= 2
        stages = n.bit_length() - 1
        record(4 * (n // 2) * stages * (x.size // max(n, 1)))
    else:
        jk = np.outer(np.arange(n), np.arange(n))
        w = np.exp(sign * 2j * np.pi * jk / n).astype(cdt)
        y = x.astype(cdt) @ w
        record(4 * n * x.size)
    if inverse:
        y = y * (1.0 / n)
    return y


def _fft_axis(x: np.ndarray, axis: int, inverse: bool) -> np.ndarray:
    moved = np.ascontiguousarray(np.moveaxis(x, axis, -1))
    return np.moveaxis(fft(moved, inverse=inverse), -1, axis)


def dft2(x: np.ndarray) -> np.ndarray:
    """Unnormalized 2D transform over the trailing (h, w) axes."""
    return _fft_axis(fft(x), -2, inverse=False)


def idft2(x: np.ndarray) -> np.ndarray:
    """2D inverse with the full 1/(h*w) normalization."""
    return _fft_axis(fft(x, inverse=True), -2, inverse=True)


def half_spectrum_width(w: int) -> int:
    return w // 2 + 1


def hermitian_full(f_half: np.ndarray, w: int) -> np.ndarray:
    """Expand ``(..., h, w//2+1)`` half-spectrum filters to the full width.

    The mirrored columns satisfy ``F[u, v] = conj(F[(h-u) % h, w-v])`` so
    that filtering a real signal yields a real signal.
    """
    h, w2 = f_half.shape[-2], f_half.shape[-1]
    if w2 != half_spectrum_width(w):
        raise ShapeError(f"half spectrum has {w2} columns, expected {half_spectrum_width(w)}")
    full = np.empty(f_half.shape[:-1] + (w,), dtype=f_half.dtype)
    full[..., :w2] = f_half
    if w2 < w:
        rows = (h - np.arange(h)) % h
        mirror = np.conj(f_half[..., rows, :][..., 1:w - w2 + 1])[..., ::-1]
        full[..., w2:] = mirror
    return full


def _fold_half(g_full: np.ndarray, w2: int) -> np.ndarray:
    """Adjoint of :func:`hermitian_full`: route mirrored-bin gradients back."""
    h, w = g_full.shape[-2], g_full.shape[-1]
    out = g_full[..., :w2].copy()
    if w2 < w:
        rows = (h - np.arange(h)) % h
        mirror = np.conj(g_full[..., rows, w2:][..., ::-1])
        out[..., 1:w - w2 + 1] += mirror
    return out


def spectral_filter(x: Tensor, f_re: Tensor, f_im: Tensor) -> Tensor:
    """Multiply the 2D spectrum of ``x`` by a learnable complex filter.

    ``x`` is ``(..., d, h, w)`` real; ``f_re``/``f_im`` are ``(d, h,
    w//2+1)`` real parameters holding the non-redundant half of a
    Hermitian filter. Returns the real part of the filtered inverse
    transform, shaped like ``x``.
    """
    h, w = x.shape[-2], x.shape[-1]
    d = x.shape[-3]
    w2 = half_spectrum_width(w)
    if f_re.shape != (d, h, w2) or f_im.shape != (d, h, w2):
        raise ShapeError(
            f"filter shapes {f_re.shape}/{f_im.shape} do not match grid ({d}, {h}, {w2})"
        )
    f_full = hermitian_full(f_re.data + 1j * f_im.data, w)
    spec = dft2(x.data)
    record(4 * spec.size)
    out = np.real(idft2(spec * f_full))

    def backward(g):
        ginv = idft2(g)
        if f_re.requires_grad or f_im.requires_grad:
            gf = spec * ginv
            gf = gf.reshape((-1,) + gf.shape[-3:]).sum(axis=0)
            gf_half = _fold_half(gf, w2)
            if f_re.requires_grad:
                f_re.accumulate_grad(np.real(gf_half).astype(x.data.dtype))
            if f_im.requires_grad:
                f_im.accumulate_grad((-np.imag(gf_half)).astype(x.data.dtype))
        if x.requires_grad:
            gx = np.real(dft2(f_full * ginv))
            x.accumulate_grad(gx.astype(x.data.dtype))

    requires = grad_enabled() and (x.requires_grad or f_re.requires_grad or f_im.requires_grad)
    out = np.ascontiguousarray(out, dtype=x.data.dtype)
    if not requires:
        return Tensor(out)
    return Tensor(out, requires_grad=True, _parents=(x, f_re, f_im), _backward=backward)
