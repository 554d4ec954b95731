"""Run configuration: a flat key/value TOML file whose keys mirror :class:`RunConfig`."""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .losses import CF_TARGETS, LossWeights


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # data / output
    data_root: str = "data"
    split: str = "train"
    out_dir: str = "runs/fginpaint"
    resume: str = ""
    # schedule
    image_size: int = 256
    batch_size: int = 5
    epochs: int = 100
    lr_g: float = 1e-4
    lr_d: float = 1e-12
    adam_betas: tuple[float, float] = (0.9, 0.999)
    critic_steps_per_gen_step: int = 1
    clip_value: float = 0.01
    seed: int = 0
    deterministic: bool = True
    # loss
    lambda_cF: float = 1.0
    lambda_F: float = 10.0
    lambda_pF: float = 0.05
    lambda_adv: float = 0.01
    cF_target: str = "masked_input"
    feature_extractor: str = "vgg16"
    # networks
    depth: int = 5
    base_channels: int = 64
    critic_depth: int = 4
    critic_base_channels: int = 64
    hole_channel: bool = False
    # logging
    checkpoint_every: int = 1000
    samples_every: int = 1
    desk_scale: bool = False

    def __post_init__(self):
        if self.lr_g < 0 or self.lr_d < 0:
            raise ConfigError("learning rates must be nonnegative")
        if self.batch_size < 1 or self.epochs < 0 or self.critic_steps_per_gen_step < 1:
            raise ConfigError("batch_size >= 1, epochs >= 0, critic_steps_per_gen_step >= 1 required")
        if self.depth < 3:
            raise ConfigError("depth must be >= 3")
        if self.image_size % (2 ** self.depth):
            raise ConfigError(f"image_size {self.image_size} not divisible by 2**depth = {2 ** self.depth}")
        if self.cF_target not in CF_TARGETS:
            raise ConfigError(f"cF_target must be one of {CF_TARGETS}")
        if self.clip_value <= 0 or self.checkpoint_every < 1 or self.samples_every < 0:
            raise ConfigError("clip_value > 0, checkpoint_every >= 1, samples_every >= 0 required")
        b1, b2 = self.adam_betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ConfigError("adam betas must lie in [0, 1)")
        LossWeights(self.lambda_cF, self.lambda_F, self.lambda_pF, self.lambda_adv)

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_cF, self.lambda_F, self.lambda_pF, self.lambda_adv)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        return d


# Small enough for a CPU: 8 images at 64x64, batch 5 -> 2 steps/epoch -> 200 steps.
DESK_SCALE = {
    "image_size": 64,
    "depth": 4,
    "base_channels": 32,
    "critic_base_channels": 32,
    "lr_d": 1e-4,
    "feature_extractor": "vgg16-seeded",
}

FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value):
    kind = FIELD_TYPES[key]
    try:
        if kind == "bool":
            if isinstance(value, str):
                low = value.lower()
                if low not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(value)
                return low in ("true", "1", "yes")
            return bool(value)
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if kind == "float":
            return float(value)
        if kind.startswith("tuple"):
            vals = value.split(",") if isinstance(value, str) else list(value)
            return tuple(float(v) for v in vals)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r} ({kind})") from exc


def read_config_file(path) -> dict[str, Any]:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    nested = [k for k, v in raw.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"{path}: config must be flat, found tables {nested}")
    return raw


def build_config(file_values: Mapping[str, Any] | None = None,
                 overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Merge defaults < desk-scale profile < config file < CLI overrides."""
    explicit: dict[str, Any] = {}
    for source in (file_values or {}, overrides or {}):
        unknown = sorted(set(source) - set(FIELD_TYPES))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        explicit.update({k: _coerce(k, v) for k, v in source.items() if v is not None})
    values: dict[str, Any] = {}
    if explicit.get("desk_scale", False):
        values.update(DESK_SCALE)
    values.update(explicit)
    return RunConfig(**values)


def load_config(path=None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    file_values = read_config_file(path) if path else {}
    return build_config(file_values, overrides)


def write_config(cfg: RunConfig, path) -> Path:
    lines = []
    for key, val in cfg.to_dict().items():
        if isinstance(val, bool):
            lines.append(f"{key} = {'true' if val else 'false'}")
        elif isinstance(val, str):
            lines.append(f"{key} = {json.dumps(val)}")  # JSON string escapes are valid TOML
        elif isinstance(val, list):
            lines.append(f"{key} = [{', '.join(repr(v) for v in val)}]")
        else:
            lines.append(f"{key} = {val!r}")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path
