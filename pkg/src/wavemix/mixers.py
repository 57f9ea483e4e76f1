"""Token mixers operating on ``(..., d, h, w)`` channel grids.

Three interchangeable mixers share one call contract (grid in, grid of
the same shape out) and expose ``parameters()`` / ``n_params``:

* ``MwaParams`` + ``mwa_forward``: multiscale wavelet mixing. Decompose
  the grid ``levels`` deep, run one shared grouped convolution (plus
  activation) over the four coarsest subbands, reconstruct (deeper
  detail bands pass through untouched), and add 1x1 and 3x3 grouped
  convolution skip branches computed on the undecomposed grid; a final
  activation fuses the three branches.
* ``SaParams`` + ``sa_forward``: multi-head scaled dot-product
  self-attention over the flattened token sequence.
* ``GfnParams`` + ``gfn_forward``: global filtering, an elementwise
  learnable complex filter applied in the 2D Fourier domain.

None of the mixers uses bias terms, which keeps their parameter counts
exact closed forms of the channel width and grouping knobs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fourier, ops, wavelets
from .errors import ConfigError
from .tensor import Parameter, Tensor


@dataclass(frozen=True)
class MwaConfig:
    """Knobs of the wavelet mixer: subband-conv kernel ``k_w`` with groups
    ``g_w``, skip-branch groups ``g1`` (1x1) and ``g2`` (3x3), and the
    decomposition depth ``levels``."""

    k_w: int = 3
    g_w: int = 1
    g1: int = 1
    g2: int = 1
    levels: int = 1

    def validate(self, d: int):
        if self.k_w < 1 or self.k_w % 2 == 0:
            raise ConfigError(f"wavelet branch kernel must be odd and positive, got {self.k_w}")
        if self.levels < 1:
            raise ConfigError(f"levels must be >= 1, got {self.levels}")
        for label, g in (("g_w", self.g_w), ("g1", self.g1), ("g2", self.g2)):
            if g < 1 or d % g != 0:
                raise ConfigError(f"{label}={g} must divide channel count {d}")

    def params_per_layer(self, d: int) -> int:
        return d * (d // self.g_w) * self.k_w ** 2 + d * (d // self.g1) + d * (d // self.g2) * 9


@dataclass(frozen=True)
class SaConfig:
    heads: int = 8

    def validate(self, d: int):
        if self.heads < 1 or d % self.heads != 0:
            raise ConfigError(f"heads={self.heads} must divide channel count {d}")

    def params_per_layer(self, d: int) -> int:
        return 4 * d * d


@dataclass(frozen=True)
class GfnConfig:
    def validate(self, d: int):
        pass

    def params_per_layer(self, d: int, h: int, w: int) -> int:
        return 2 * d * h * fourier.half_spectrum_width(w)


def _conv_param(rng, d, c_in_g, k, name, dtype):
    sigma = 1.0 / np.sqrt(c_in_g * k * k)
    return Parameter(rng.normal(0.0, sigma, size=(d, c_in_g, k, k)).astype(dtype), name=name)


class MwaParams:
    """Weights of the wavelet mixer: shared subband conv plus two skips."""

    def __init__(self, d: int, cfg: MwaConfig = MwaConfig(), rng=None,
                 dtype=np.float64, prefix: str = "mwa"):
        cfg.validate(d)
        rng = np.random.default_rng(0) if rng is None else rng
        self.d = d
        self.cfg = cfg
        self.dwt = wavelets.DwtConfig(levels=cfg.levels)
        self.activation = ops.gelu
        self.w_wave = _conv_param(rng, d, d // cfg.g_w, cfg.k_w, f"{prefix}.w_wave", dtype)
        self.w_skip1 = _conv_param(rng, d, d // cfg.g1, 1, f"{prefix}.w_skip1", dtype)
        self.w_skip3 = _conv_param(rng, d, d // cfg.g2, 3, f"{prefix}.w_skip3", dtype)

    def parameters(self):
        return [self.w_wave, self.w_skip1, self.w_skip3]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def __call__(self, x: Tensor) -> Tensor:
        return mwa_forward(x, self)


def mwa_forward(x: Tensor, p: MwaParams) -> Tensor:
    """y = act(B_wave + B_skip1 + B_skip3) on a ``(..., d, h, w)`` grid.

    ``B_wave`` convolves the four level-``levels`` subbands with one
    shared grouped kernel, applies the activation, and inverts the
    transform; the skip branches are activated grouped convolutions of
    the undecomposed input.
    """
    d, cfg, act = p.d, p.cfg, p.activation
    if x.shape[-3] != d:
        raise ConfigError(f"mixer built for {d} channels, input has {x.shape[-3]}")
    wavelets.check_grid(x.shape, cfg.levels)

    packs = []
    cur = x
    for _ in range(cfg.levels):
        packed = wavelets.dwt2_step(cur)
        cur = ops.getitem(packed, (Ellipsis, slice(0, d), slice(None), slice(None)))
        packs.append(packed)

    # One shared-weight convolution covers all four coarsest subbands by
    # folding the subband index into the batch.
    deep = packs[-1]
    lead = deep.shape[:-3]
    hs, ws = deep.shape[-2:]
    stacked = ops.reshape(deep, lead + (4, d, hs, ws))
    mixed = act(ops.grouped_conv2d(stacked, p.w_wave, groups=cfg.g_w))
    repacked = ops.reshape(mixed, lead + (4 * d, hs, ws))

    b_wave = wavelets.idwt2_step(repacked)
    for packed in reversed(packs[:-1]):
        tail = ops.getitem(packed, (Ellipsis, slice(d, 4 * d), slice(None), slice(None)))
        b_wave = wavelets.idwt2_step(ops.concat((b_wave, tail), axis=-3))

    b1 = act(ops.grouped_conv2d(x, p.w_skip1, groups=cfg.g1))
    b3 = act(ops.grouped_conv2d(x, p.w_skip3, groups=cfg.g2))
    return act(ops.add(ops.add(b_wave, b1), b3))


class SaParams:
    """QKV and output projections of multi-head self-attention."""

    def __init__(self, d: int, cfg: SaConfig = SaConfig(), rng=None,
                 dtype=np.float64, prefix: str = "sa"):
        cfg.validate(d)
        rng = np.random.default_rng(0) if rng is None else rng
        self.d = d
        self.heads = cfg.heads
        sigma = 1.0 / np.sqrt(d)
        self.w_qkv = Parameter(rng.normal(0.0, sigma, size=(d, 3 * d)).astype(dtype),
                               name=f"{prefix}.w_qkv")
        self.w_out = Parameter(rng.normal(0.0, sigma, size=(d, d)).astype(dtype),
                               name=f"{prefix}.w_out")

    def parameters(self):
        return [self.w_qkv, self.w_out]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def __call__(self, x: Tensor) -> Tensor:
        return sa_forward(x, self)


def sa_forward(x: Tensor, p: SaParams) -> Tensor:
    """Multi-head attention over the h*w token sequence of the grid."""
    d, heads = p.d, p.heads
    if x.shape[-3] != d:
        raise ConfigError(f"mixer built for {d} channels, input has {x.shape[-3]}")
    lead = x.shape[:-3]
    h, w = x.shape[-2:]
    n = h * w
    dh = d // heads

    # Grid -> token sequence (..., n, d), row-major over (h, w).
    seq = ops.reshape(ops.moveaxis(x, -3, -1), lead + (n, d))
    qkv = ops.matmul(seq, p.w_qkv)

    def head_split(t):
        t = ops.reshape(t, lead + (n, heads, dh))
        return ops.swapaxes(t, -3, -2)  # (..., heads, n, dh)

    q = head_split(ops.getitem(qkv, (Ellipsis, slice(0, d))))
    k = head_split(ops.getitem(qkv, (Ellipsis, slice(d, 2 * d))))
    v = head_split(ops.getitem(qkv, (Ellipsis, slice(2 * d, 3 * d))))

    scores = ops.scale(ops.matmul(q, ops.swapaxes(k, -1, -2)), 1.0 / float(np.sqrt(dh)))
    attn = ops.softmax(scores, axis=-1)
    ctx = ops.matmul(attn, v)  # (..., heads, n, dh)
    merged = ops.reshape(ops.swapaxes(ctx, -3, -2), lead + (n, d))
    out = ops.matmul(merged, p.w_out)
    return ops.moveaxis(ops.reshape(out, lead + (h, w, d)), -1, -3)


class GfnParams:
    """Half-spectrum complex filter stored as two real tensors."""

    def __init__(self, d: int, h: int, w: int, cfg: GfnConfig = GfnConfig(), rng=None,
                 dtype=np.float64, prefix: str = "gfn", init_sigma: float = 0.02):
        cfg.validate(d)
        rng = np.random.default_rng(0) if rng is None else rng
        self.d, self.h, self.w = d, h, w
        w2 = fourier.half_spectrum_width(w)
        re = 1.0 + rng.normal(0.0, init_sigma, size=(d, h, w2))
        im = rng.normal(0.0, init_sigma, size=(d, h, w2))
        self.f_re = Parameter(re.astype(dtype), name=f"{prefix}.f_re")
        self.f_im = Parameter(im.astype(dtype), name=f"{prefix}.f_im")

    def parameters(self):
        return [self.f_re, self.f_im]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def __call__(self, x: Tensor) -> Tensor:
        return gfn_forward(x, self)


def gfn_forward(x: Tensor, p: GfnParams) -> Tensor:
    """y = idft2(dft2(x) * filter), elementwise per channel; real output."""
    if x.shape[-3:] != (p.d, p.h, p.w):
        raise ConfigError(
            f"filter built for grid ({p.d}, {p.h}, {p.w}), input has {x.shape[-3:]}"
        )
    return fourier.spectral_filter(x, p.f_re, p.f_im)


MIXER_KINDS = ("mwa", "sa", "gfn")


def build_mixer(kind: str, d: int, h: int, w: int, rng=None,
                dtype=np.float64, prefix: str = "mixer", **knobs):
    """Construct mixer weights by name; unknown kinds raise ``ConfigError``."""
    if kind == "mwa":
        return MwaParams(d, MwaConfig(**knobs), rng, dtype=dtype, prefix=prefix)
    if kind == "sa":
        return SaParams(d, SaConfig(**knobs), rng, dtype=dtype, prefix=prefix)
    if kind == "gfn":
        return GfnParams(d, h, w, GfnConfig(**knobs), rng, dtype=dtype, prefix=prefix)
    raise ConfigError(f"unknown mixer kind {kind!r}; expected one of {MIXER_KINDS}")
