"""Vision transformer backbone with pluggable token mixers.

Layout convention: after patch embedding the activations live on a
``(batch, d, h, w)`` channel grid and stay there through every block;
token mixers and layer norms act on that grid directly. Blocks are
pre-norm residual pairs::

    x = x + mixer(norm1(x))
    x = x + mlp(norm2(x))

followed by a final norm, global average pooling over the grid, and a
linear classification head.

Checkpoints are a single binary file: magic ``WVMX``, a format version,
a manifest of (name, dtype, shape) records, then the raw little-endian
array payloads in manifest order. Loading validates the total length
and every record boundary.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import mixers, ops, wavelets
from .errors import ConfigError, DataError
from .tensor import Parameter, Tensor

CHECKPOINT_MAGIC = b"WVMX"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    mixer: str = "mwa"
    image_size: int = 32
    patch_size: int = 4
    channels: int = 3
    dim: int = 384
    depth: int = 12
    classes: int = 10
    mlp_ratio: int = 4
    heads: int = 8
    k_w: int = 3
    g_w: int = 1
    g1: int = 1
    g2: int = 1
    levels: int = 1
    dtype: str = "float64"
    seed: int = 0

    def __post_init__(self):
        if self.mixer not in mixers.MIXER_KINDS:
            raise ConfigError(f"unknown mixer {self.mixer!r}; expected one of {mixers.MIXER_KINDS}")
        if self.patch_size < 1 or self.image_size % self.patch_size != 0:
            raise ConfigError(
                f"image size {self.image_size} not divisible by patch size {self.patch_size}"
            )
        for label, v in (("dim", self.dim), ("classes", self.classes),
                         ("mlp_ratio", self.mlp_ratio), ("channels", self.channels)):
            if v < 1:
                raise ConfigError(f"{label} must be >= 1, got {v}")
        if self.depth < 0:
            raise ConfigError(f"depth must be >= 0, got {self.depth}")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError(f"dtype must be float64 or float32, got {self.dtype!r}")
        if self.mixer == "mwa":
            self.mixer_knobs().validate(self.dim)
            wavelets.check_grid((1, self.grid, self.grid), self.levels)
        elif self.mixer == "sa":
            self.mixer_knobs().validate(self.dim)

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def mixer_knobs(self):
        if self.mixer == "mwa":
            return mixers.MwaConfig(k_w=self.k_w, g_w=self.g_w, g1=self.g1, g2=self.g2,
                                    levels=self.levels)
        if self.mixer == "sa":
            return mixers.SaConfig(heads=self.heads)
        return mixers.GfnConfig()


class Block:
    """Pre-norm residual block: token mixer then channel MLP."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, prefix: str):
        d = cfg.dim
        dt = cfg.np_dtype
        hid = cfg.mlp_ratio * d

        def norm_pair(tag):
            return (Parameter(np.ones(d, dtype=dt), name=f"{prefix}.{tag}.gain", decay=False),
                    Parameter(np.zeros(d, dtype=dt), name=f"{prefix}.{tag}.bias", decay=False))

        self.norm1 = norm_pair("norm1")
        self.mixer = mixers.build_mixer(cfg.mixer, d, cfg.grid, cfg.grid, rng, dtype=dt,
                                        prefix=f"{prefix}.mixer", **vars(cfg.mixer_knobs()))
        self.norm2 = norm_pair("norm2")
        self.mlp_w1 = Parameter(rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, hid)).astype(dt),
                                name=f"{prefix}.mlp.w1")
        self.mlp_b1 = Parameter(np.zeros(hid, dtype=dt), name=f"{prefix}.mlp.b1", decay=False)
        self.mlp_w2 = Parameter(rng.normal(0.0, 1.0 / np.sqrt(hid), size=(hid, d)).astype(dt),
                                name=f"{prefix}.mlp.w2")
        self.mlp_b2 = Parameter(np.zeros(d, dtype=dt), name=f"{prefix}.mlp.b2", decay=False)

    def parameters(self):
        out = [*self.norm1, *self.mixer.parameters(), *self.norm2,
               self.mlp_w1, self.mlp_b1, self.mlp_w2, self.mlp_b2]
        return out

    def __call__(self, x: Tensor) -> Tensor:
        h = ops.layer_norm(x, *self.norm1)
        x = ops.add(x, self.mixer(h))
        h = ops.layer_norm(x, *self.norm2)
        lead = h.shape[:-3]
        d, gh, gw = h.shape[-3:]
        seq = ops.reshape(ops.moveaxis(h, -3, -1), lead + (gh * gw, d))
        seq = ops.add(ops.matmul(seq, self.mlp_w1), self.mlp_b1)
        seq = ops.gelu(seq)
        seq = ops.add(ops.matmul(seq, self.mlp_w2), self.mlp_b2)
        grid = ops.moveaxis(ops.reshape(seq, lead + (gh, gw, d)), -1, -3)
        return ops.add(x, grid)


class VitModel:
    """Patch embedding, ``depth`` mixer blocks, pooled linear head."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        dt = cfg.np_dtype
        rng = np.random.default_rng(cfg.seed)
        d, p, c = cfg.dim, cfg.patch_size, cfg.channels
        g = cfg.grid

        fan = c * p * p
        self.patch_w = Parameter(rng.normal(0.0, 1.0 / np.sqrt(fan), size=(fan, d)).astype(dt),
                                 name="patch.w")
        self.patch_b = Parameter(np.zeros(d, dtype=dt), name="patch.b", decay=False)
        self.pos = Parameter(rng.normal(0.0, 0.02, size=(d, g, g)).astype(dt),
                             name="pos", decay=False)
        self.blocks = [Block(cfg, rng, prefix=f"blocks.{i}") for i in range(cfg.depth)]
        self.norm_gain = Parameter(np.ones(d, dtype=dt), name="norm.gain", decay=False)
        self.norm_bias = Parameter(np.zeros(d, dtype=dt), name="norm.bias", decay=False)
        self.head_w = Parameter(
            rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, cfg.classes)).astype(dt), name="head.w"
        )
        self.head_b = Parameter(np.zeros(cfg.classes, dtype=dt), name="head.b", decay=False)

    def parameters(self):
        out = [self.patch_w, self.patch_b, self.pos]
        for b in self.blocks:
            out.extend(b.parameters())
        out.extend([self.norm_gain, self.norm_bias, self.head_w, self.head_b])
        return out

    def named_parameters(self):
        params = self.parameters()
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate parameter names in model")
        return dict(zip(names, params))

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def embed(self, images: Tensor) -> Tensor:
        cfg = self.cfg
        p, g = cfg.patch_size, cfg.grid
        b = images.shape[0]
        if images.shape[1:] != (cfg.channels, cfg.image_size, cfg.image_size):
            raise ConfigError(
                f"expected images ({cfg.channels}, {cfg.image_size}, {cfg.image_size}), "
                f"got {images.shape[1:]}"
            )
        t = ops.reshape(images, (b, cfg.channels, g, p, g, p))
        t = ops.transpose(t, (0, 2, 4, 1, 3, 5))     # (b, gh, gw, c, p, p)
        t = ops.reshape(t, (b, g, g, cfg.channels * p * p))
        t = ops.add(ops.matmul(t, self.patch_w), self.patch_b)
        grid = ops.moveaxis(t, -1, -3)               # (b, d, gh, gw)
        return ops.add(grid, self.pos)

    def forward(self, images) -> Tensor:
        if not isinstance(images, Tensor):
            images = Tensor(np.asarray(images, dtype=self.cfg.np_dtype))
        x = self.embed(images)
        for block in self.blocks:
            x = block(x)
        x = ops.layer_norm(x, self.norm_gain, self.norm_bias)
        pooled = ops.mean(x, axis=(-2, -1))
        return ops.add(ops.matmul(pooled, self.head_w), self.head_b)

    __call__ = forward

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters().items()}

    def load_state(self, state: dict):
        params = self.named_parameters()
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise DataError(f"state mismatch: missing {missing}, unexpected {unexpected}")
        for name, p in params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise DataError(
                    f"shape mismatch for {name}: checkpoint {arr.shape}, model {p.shape}"
                )
            p.data[...] = arr.astype(p.dtype)


# -- checkpoint serialization ---------------------------------------------


def save_checkpoint(path, arrays: dict):
    """Write named arrays to ``path`` in the manifest + payload format."""
    names = list(arrays)
    manifest = bytearray()
    payload = bytearray()
    for name in names:
        # asarray keeps 0-d inputs 0-d; ascontiguousarray would pad to (1,).
        arr = np.asarray(arrays[name], order="C")
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        dt = arr.dtype.newbyteorder("<").str.encode("ascii")
        nb = name.encode("utf-8")
        manifest += struct.pack("<H", len(nb)) + nb
        manifest += struct.pack("<H", len(dt)) + dt
        manifest += struct.pack("<B", arr.ndim)
        manifest += struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b""
        payload += arr.astype(arr.dtype.newbyteorder("<")).tobytes()
    header = CHECKPOINT_MAGIC + struct.pack("<HIQ", CHECKPOINT_VERSION, len(names), len(payload))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(bytes(manifest))
        fh.write(bytes(payload))


def load_checkpoint(path) -> dict:
    """Read a checkpoint back into a name -> array dict, validating layout."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 18 or blob[:4] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic)")
    version, count, payload_len = struct.unpack("<HIQ", blob[4:18])
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    off = 18
    entries = []
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off:off + nlen].decode("utf-8")
            off += nlen
            (dlen,) = struct.unpack_from("<H", blob, off)
            off += 2
            dt = np.dtype(blob[off:off + dlen].decode("ascii"))
            off += dlen
            (ndim,) = struct.unpack_from("<B", blob, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, off) if ndim else ()
            off += 4 * ndim
            entries.append((name, dt, shape))
    except (struct.error, UnicodeDecodeError, TypeError) as exc:
        raise DataError(f"{path}: truncated manifest at byte {off}: {exc}") from exc
    if len(blob) - off != payload_len:
        raise DataError(
            f"{path}: payload length mismatch: header says {payload_len}, file has "
            f"{len(blob) - off}"
        )
    arrays = {}
    for name, dt, shape in entries:
        nbytes = dt.itemsize * int(np.prod(shape, dtype=np.int64)) if shape else dt.itemsize
        if off + nbytes > len(blob):
            raise DataError(f"{path}: payload for {name!r} overruns file at byte {off}")
        arrays[name] = np.frombuffer(blob, dtype=dt, count=max(nbytes // dt.itemsize, 0),
                                     offset=off).reshape(shape).copy()
        off += nbytes
    if off != len(blob):
        raise DataError(f"{path}: {len(blob) - off} trailing bytes after payloads")
    return arrays
