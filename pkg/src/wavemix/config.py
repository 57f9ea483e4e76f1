"""Run configuration: one flat key=value namespace for model, training,
and dataset settings.

Config files are plain text, one ``key = value`` per line, ``#``
comments allowed. Parsing is strict: unknown keys are errors, and a
parsed config serializes back to a canonical form that re-parses to an
identical config (round-trip invariant). The canonical text is embedded
in reports for provenance.

Precedence when resolving: CLI override > config file > built-in
default.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ConfigError
from .model import ModelConfig
from .training import TrainConfig


@dataclass
class RunConfig:
    # model
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
    # training
    epochs: int = 300
    warmup_epochs: int = 5
    base_lr: float = 5e-4
    min_lr: float = 1e-5
    weight_decay: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 1.0
    batch_size: int = 128
    augment: bool = False
    # data
    dataset: str = "synthetic"
    data_root: str = ""
    subset: int = 0  # 0 means the full split
    seed: int = 0

    def model_config(self) -> ModelConfig:
        names = {f.name for f in fields(ModelConfig)}
        kw = {k: v for k, v in vars(self).items() if k in names}
        if self.dataset == "cifar100":
            kw["classes"] = 100
        elif self.dataset == "cifar10":
            kw["classes"] = 10
        return ModelConfig(**kw)

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: v for k, v in vars(self).items() if k in names})

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type == "bool" or isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _parse_value(key: str, raw: str):
    f = _FIELDS[key]
    kind = f.type if isinstance(f.type, str) else f.type.__name__
    raw = raw.strip()
    try:
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from exc


def parse_config_text(text: str) -> RunConfig:
    cfg = RunConfig()
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"config line {lineno}: expected key = value, got {line!r}")
        key, raw = body.split("=", 1)
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"config line {lineno}: duplicate key {key!r}")
        seen.add(key)
        setattr(cfg, key, _parse_value(key, raw))
    return cfg


def load_config_file(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc


def resolve(config_path=None, overrides=None) -> RunConfig:
    """Defaults, then the config file, then CLI overrides."""
    cfg = load_config_file(config_path) if config_path else RunConfig()
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, key, _parse_value(key, str(value)) if isinstance(value, str)
                else value)
    return cfg
