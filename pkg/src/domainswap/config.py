"""Flat key-value configuration for runs.

Config files hold one ``key = value`` pair per line with ``#`` comments.
Every key maps to a typed ``RunConfig`` field; unknown keys are rejected so
typos fail loudly. Command-line flags override file values.
"""

from __future__ import annotations

import typing
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .networks import ModelConfig, PlacementConfig, PlacementVariant


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse flat key-value text; duplicate keys are an error."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"{source}:{lineno}: empty key or value")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_kv_file(path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_kv(path.read_text(), source=str(path))


def _coerce(key: str, value: str, typ):
    try:
        if typ is bool:
            low = value.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(value)
        return typ(value)
    except ValueError as e:
        raise ConfigError(f"key {key!r}: cannot parse {value!r} as {typ.__name__}") from e


@dataclass
class RunConfig:
    """Everything a training/evaluation run needs, all file-serializable."""

    data_root: str = "runs/data"
    domain_a: str = "a"
    domain_b: str = "b"
    out_dir: str = "runs/out"
    image_size: int = 16
    base_channels: int = 16
    style_dim: int = 8
    variant: str = "ds-us"
    discriminator_sa: bool = True
    attention_reduction: int = 8
    attention_cap: int = 4096
    spectral_norm: bool = False
    lambda_x: float = 10.0
    lambda_c: float = 1.0
    lambda_s: float = 1.0
    saturating_gan: bool = False
    lr: float = 1e-4
    beta1: float = 0.05
    beta2: float = 0.999
    halve_every: int = 100_000
    iters: int = 2000
    checkpoint_every: int = 500
    log_every: int = 1
    seed: int = 0

    def __post_init__(self):
        PlacementVariant.from_name(self.variant)
        if self.image_size < 8 or self.image_size % 4:
            raise ConfigError(f"image_size must be a multiple of 4 and >= 8, got {self.image_size}")
        for name in ("lambda_x", "lambda_c", "lambda_s"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1)")
        if self.halve_every < 1:
            raise ConfigError("halve_every must be at least 1")
        if self.iters < 0:
            raise ConfigError("iters must be nonnegative")
        if self.checkpoint_every < 1 or self.log_every < 1:
            raise ConfigError("checkpoint_every and log_every must be at least 1")

    # -- kv round trip ---------------------------------------------------------
    @classmethod
    def field_types(cls) -> dict[str, type]:
        hints = typing.get_type_hints(cls)
        return {f.name: hints[f.name] for f in fields(cls)}

    @classmethod
    def from_kv(cls, kv: dict[str, str]) -> "RunConfig":
        types = cls.field_types()
        unknown = sorted(set(kv) - set(types))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        values = {key: _coerce(key, raw, types[key]) for key, raw in kv.items()}
        return cls(**values)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_kv(read_kv_file(path))

    def apply_overrides(self, kv: dict[str, str]) -> "RunConfig":
        merged = self.to_kv()
        types = self.field_types()
        for key, value in kv.items():
            if key not in types:
                raise ConfigError(f"unknown config key: {key}")
            merged[key] = value
        return RunConfig.from_kv(merged)

    def to_kv(self) -> dict[str, str]:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = str(value).lower() if isinstance(value, bool) else str(value)
        return out

    def dump(self) -> str:
        return "\n".join(f"{key} = {value}" for key, value in self.to_kv().items()) + "\n"

    # -- derived pieces -----------------------------------------------------------
    def model_config(self) -> ModelConfig:
        return ModelConfig(
            image_size=self.image_size,
            base_channels=self.base_channels,
            style_dim=self.style_dim,
            placement=PlacementConfig(
                variant=PlacementVariant.from_name(self.variant),
                attach_discriminator_sa=self.discriminator_sa,
            ),
            attention_reduction=self.attention_reduction,
            attention_cap=self.attention_cap,
            spectral_norm=self.spectral_norm,
            seed=self.seed,
        )
