"""
config.py
---------
ExperimentConfig: every knob of a training run, loaded from YAML.

File format
-----------
  Nested sections, as in src/config/base.yaml:

      lumix:
        r1: 0.4
        r2: 0.1

  Flat dotted keys (``lumix.r1: 0.4``) are accepted too.  Command-line
  overrides use the dotted form, ``--set lumix.r1=0.4``; the value part is
  parsed as YAML, so ``true``, ``1e-3``, ``[0.1, 0.4]`` and ``none`` work.

Unknown keys, wrong value types and invariant violations raise ConfigError
before anything is generated or trained.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Any

import yaml

from augment.lumix import LumixConfig
from augment.mixing import AugmentConfig, patch_layout
from common.errors import ConfigError, ShapeError
from data.dataset import DatasetConfig
from model.network import ARCHITECTURES

OCCLUSION_MODES = ("random", "salient_proxy", "nonsalient_proxy")
INFO_LOSS_LEVELS = tuple(round(0.1 * k, 1) for k in range(10))


@dataclass
class ModelConfig:
    arch: str = "conv"
    hidden: list[int] = field(default_factory=lambda: [256, 128])
    conv_channels: list[int] = field(default_factory=lambda: [8, 16])
    conv_hidden: int = 64


@dataclass
class OptimConfig:
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 30
    batch_size: int = 64
    warmup_epochs: int = 1
    eval_batch_size: int = 256


@dataclass
class RobustnessConfig:
    patch_grid: int = 4
    info_loss: list[float] = field(default_factory=lambda: list(INFO_LOSS_LEVELS))
    modes: list[str] = field(default_factory=lambda: list(OCCLUSION_MODES))
    shuffle_grids: list[int] = field(default_factory=lambda: [1, 2, 4, 8])


@dataclass
class ExperimentConfig:
    name: str = "base"
    seed: int = 0
    output_dir: str | None = None
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    lumix: LumixConfig = field(default_factory=LumixConfig)
    robustness: RobustnessConfig = field(default_factory=RobustnessConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def image_hw(self) -> tuple[int, int] | None:
        if self.dataset.kind == "collage":
            return self.dataset.canvas, self.dataset.canvas
        if self.dataset.kind == "blobs":
            return 1, self.dataset.blob_dim
        return None

    def validate(self) -> "ExperimentConfig":
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an integer in [0, 2^64), got {self.seed!r}")
        self.dataset.validate()
        self.augment.validate()
        self.lumix.validate()

        if self.model.arch not in ARCHITECTURES:
            raise ConfigError(f"model.arch must be one of {ARCHITECTURES}, got {self.model.arch!r}")
        if len(self.model.conv_channels) != 2 or any(c < 1 for c in self.model.conv_channels):
            raise ConfigError("model.conv_channels must be two positive ints")
        if any(h < 1 for h in self.model.hidden) or self.model.conv_hidden < 1:
            raise ConfigError("model hidden sizes must be positive")

        o = self.optim
        if o.lr < 0 or o.weight_decay < 0 or not 0.0 <= o.momentum < 1.0:
            raise ConfigError("optim: need lr >= 0, weight_decay >= 0, 0 <= momentum < 1")
        if o.epochs < 0 or o.batch_size < 1 or o.warmup_epochs < 0 or o.eval_batch_size < 1:
            raise ConfigError("optim: need epochs >= 0, batch sizes >= 1, warmup_epochs >= 0")

        r = self.robustness
        if any(m not in OCCLUSION_MODES for m in r.modes):
            raise ConfigError(f"robustness.modes must be drawn from {OCCLUSION_MODES}")
        if any(round(f, 1) not in INFO_LOSS_LEVELS or abs(f - round(f, 1)) > 1e-9 for f in r.info_loss):
            raise ConfigError(f"robustness.info_loss levels must be among {INFO_LOSS_LEVELS}")

        hw = self.image_hw()
        if hw is not None:
            h, w = hw
            if self.model.arch == "conv" and (h % 4 or w % 4):
                raise ConfigError(f"model.arch=conv needs image sides divisible by 4, got {h}x{w}")
            grids = {}
            if self.augment.mode == "cutmix_shuffle":
                grids["augment.shuffle_grid"] = self.augment.shuffle_grid
            if self.augment.mode == "per_patch_lambda":
                grids["augment.patch_grid"] = self.augment.patch_grid
            for key, g in grids.items():
                if g < 1 or h % g or w % g:
                    raise ConfigError(f"{key}={g} does not divide the {h}x{w} image")
            probe_grids = {"robustness.patch_grid": [r.patch_grid], "robustness.shuffle_grids": r.shuffle_grids}
            for key, gs in probe_grids.items():
                for g in gs:
                    try:
                        patch_layout(h, w, g)
                    except ShapeError:
                        raise ConfigError(f"{key}={g} does not divide the {h}x{w} image") from None
        return self


# ── Dict → dataclass ──────────────────────────────────────────────────────────

def _coerce(key: str, value: Any, default: Any) -> Any:
    if default is None:
        if isinstance(value, str) and value.lower() == "none":
            return None
        if value is None or isinstance(value, str):
            return value
        raise ConfigError(f"{key}: expected a string or none, got {value!r}")
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected true/false, got {value!r}")
    if isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    if isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, str):
            # YAML 1.1 reads exponent forms without a dot ("1e-3") as strings
            try:
                return float(value)
            except ValueError:
                pass
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if isinstance(default, str):
        if isinstance(value, str):
            return value
        raise ConfigError(f"{key}: expected a string, got {value!r}")
    if isinstance(default, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected a list, got {value!r}")
        if default:
            return [_coerce(f"{key}[{i}]", v, default[0]) for i, v in enumerate(value)]
        return list(value)
    return value


def _build(cls, data: dict, prefix: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected a mapping, got {data!r}")
    defaults = cls()
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(prefix + k for k in unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = getattr(defaults, name)
        key = prefix + name
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value or {}, key + ".")
        else:
            kwargs[name] = _coerce(key, value, default)
    return cls(**kwargs)


def unflatten(data: dict) -> dict:
    out: dict = {}
    for key, value in (data or {}).items():
        if isinstance(value, dict):
            value = unflatten(value)
        parts = str(key).split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"config key {key!r} collides with a scalar")
        if isinstance(value, dict) and isinstance(node.get(parts[-1]), dict):
            node[parts[-1]].update(value)
        else:
            node[parts[-1]] = value
    return out


def apply_override(data: dict, assignment: str) -> dict:
    if "=" not in assignment:
        raise ConfigError(f"override must look like section.key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    key = key.strip()
    try:
        value = yaml.safe_load(raw) if raw.strip() else ""
    except yaml.YAMLError as e:
        raise ConfigError(f"override {key}: cannot parse value {raw!r} ({e})") from None
    parts = key.split(".")
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return data


def config_from_dict(data: dict, overrides: list[str] | None = None) -> ExperimentConfig:
    data = unflatten(data)
    for assignment in overrides or []:
        apply_override(data, assignment)
    return _build(ExperimentConfig, data).validate()


def load_config(path: str | None, overrides: list[str] | None = None) -> ExperimentConfig:
    data = {}
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as f:
            try:
                data = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigError(f"{path}: invalid YAML ({e})") from None
        data.pop("project", None)
    return config_from_dict(data, overrides)


def save_config(cfg: ExperimentConfig, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "config.yaml")
    with open(path, "w") as f:
        yaml.safe_dump(cfg.to_dict(), f, default_flow_style=False, sort_keys=False)
    return path
