"""Run configuration: one YAML file with a section per subsystem.

Example::

    training:
      steps: 500
      alpha_ss: 1.0
      alpha_sup: 1.0
    evaluation:
      mode: per-partition

Unknown sections or keys are rejected. Command-line flags override file values.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from .augment import AugmentConfig
from .errors import ConfigError
from .evaluation import EvalConfig
from .features import SCHEMA_ID
from .frontend import FrontendConfig
from .trainer import TrainConfig


@dataclass(frozen=True)
class FeatureConfig:
    schema_id: str = SCHEMA_ID


@dataclass(frozen=True)
class ModelConfig:
    channels: tuple = (16, 32, 64)
    embed_dim: int = 128
    hidden: int = 256


@dataclass(frozen=True)
class PathConfig:
    corpus_dir: str = ""
    manifest: str = ""
    features: str = ""
    checkpoint: str = ""
    embeddings: str = ""
    out: str = ""


SECTIONS = {
    "frontend": FrontendConfig,
    "features": FeatureConfig,
    "augmentation": AugmentConfig,
    "model": ModelConfig,
    "training": TrainConfig,
    "evaluation": EvalConfig,
    "paths": PathConfig,
}


@dataclass(frozen=True)
class RunConfig:
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    augmentation: AugmentConfig = field(default_factory=AugmentConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    paths: PathConfig = field(default_factory=PathConfig)

    def to_dict(self) -> dict:
        out = {}
        for name in SECTIONS:
            sec = dataclasses.asdict(getattr(self, name))
            out[name] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in sec.items()}
        return out

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=None)


def _coerce(cls, key, value, default):
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{cls.__name__}.{key} expects a list, got {value!r}")
        return tuple(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{cls.__name__}.{key} expects true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{cls.__name__}.{key} expects an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{cls.__name__}.{key} expects a number, got {value!r}")
        return float(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{cls.__name__}.{key} expects a string, got {value!r}")
    return value


def _build(name: str, values: dict, base):
    cls = SECTIONS[name]
    defaults = dataclasses.asdict(base)
    unknown = set(values) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {sorted(unknown)}")
    kwargs = {k: _coerce(cls, k, v, defaults[k]) for k, v in values.items()}
    try:
        return dataclasses.replace(base, **kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid [{name}] settings: {exc}") from exc


def resolve(data: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Merge file contents and flag overrides (both ``{section: {key: value}}``)."""
    cfg = RunConfig()
    for layer in (data or {}, overrides or {}):
        if not isinstance(layer, dict):
            raise ConfigError("config must be a mapping of sections")
        unknown = set(layer) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        for name, values in layer.items():
            if values is None:
                continue
            if not isinstance(values, dict):
                raise ConfigError(f"section [{name}] must be a mapping")
            cfg = dataclasses.replace(cfg, **{name: _build(name, values, getattr(cfg, name))})
    return cfg


def load_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    data = None
    if path:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
    return resolve(data, overrides)
