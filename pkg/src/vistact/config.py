"""Declarative experiment configuration.

One YAML file pins everything a run depends on: dataset generation
parameters, model shape, training hyperparameters, and evaluation
options, under a single global seed. Command-line flags may override
individual values; the file is the record.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import get_type_hints

import yaml

from .errors import ConfigError
from .model import ModelConfig
from .report import EvalConfig
from .train import TrainConfig


@dataclass(frozen=True)
class DataGenConfig:
    out: str = "data/desk"
    canvas: int = 128
    approach_frames: int = 19
    press_frames: int = 26
    release_frames: int = 19
    n_train: int = 20
    n_test_seen: int = 8
    n_test_unseen: int = 4
    touches_per_scene: int = 2
    object_count: tuple[int, int] = (4, 10)
    desk_touch_prob: float = 0.6
    peak_pressure_range: tuple[float, float] = (0.4, 1.0)
    marker_rows: int = 11
    marker_cols: int = 11
    push_amplitude: float = 4.0
    push_sigma: float = 10.0
    indent_sigma: float = 10.0
    indent_depth: float = 8.0

    def validate(self) -> None:
        if self.canvas < 32:
            raise ConfigError(f"canvas {self.canvas} below minimum 32")
        if min(self.n_train, self.n_test_seen, self.n_test_unseen) < 0:
            raise ConfigError("split sizes must be nonnegative")
        if self.n_train < 1:
            raise ConfigError("need at least one training sequence")
        if not (0.0 <= self.desk_touch_prob <= 1.0):
            raise ConfigError("desk_touch_prob must lie in [0, 1]")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    dataset: DataGenConfig = field(default_factory=DataGenConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    train_out: str = "runs/exp"
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> None:
        self.dataset.validate()
        self.model.validate()
        self.train.validate()
        crop = self.train.augment.crop_size
        effective = crop if crop is not None else self.dataset.canvas
        if self.model.image_size != effective:
            raise ConfigError(
                f"model.image_size {self.model.image_size} must equal the training "
                f"resolution {effective} (canvas or augment crop)")


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def _build(cls, payload: dict, path: str):
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(payload).__name__}")
    hints = get_type_hints(cls)
    known = {f.name: f for f in fields(cls)}
    unknown = set(payload) - set(known)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in payload.items():
        hint = hints.get(key)
        if dataclasses.is_dataclass(hint) and isinstance(value, dict):
            kwargs[key] = _build(hint, value, f"{path}.{key}")
        else:
            kwargs[key] = _tuplify(value)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_config(path: Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    with open(path) as fh:
        try:
            payload = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    config = _build(ExperimentConfig, payload, path=path.name)
    config.validate()
    return config


def apply_overrides(config: ExperimentConfig, **updates) -> ExperimentConfig:
    """Replace top-level or section fields; used by CLI flag overrides."""
    sections = {}
    plain = {}
    for key, value in updates.items():
        if value is None:
            continue
        if "." in key:
            section, name = key.split(".", 1)
            sections.setdefault(section, {})[name] = value
        else:
            plain[key] = value
    for section, vals in sections.items():
        current = getattr(config, section)
        plain[section] = dataclasses.replace(current, **vals)
    config = dataclasses.replace(config, **plain)
    config.validate()
    return config
