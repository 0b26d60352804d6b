"""Run configuration: YAML text <-> nested dataclasses.

A bare ``RunConfig()`` carries the published simulation setup (SAC learning
rate, discount, entropy coefficient, replay size, network width, batch size,
termination distance, leader gains, rod and drone masses, CG speed).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..dynamics import CgTrajectory
from ..env import EpisodeConfig
from ..inner_control import ActionBounds
from ..leader import PidGains
from ..sac import SacConfig

MODES = ("train", "eval", "simulate")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration file."""


@dataclass(frozen=True)
class ThrustMapping:
    """Vertical-acceleration to Crazyflie thrust-count conversion."""

    thr_hov: int = 46000
    k_pz: float = 1000.0
    min: int = 10000
    max: int = 60000

    def __post_init__(self):
        if not self.min < self.thr_hov < self.max:
            raise ValueError("thrust mapping needs min < thr_hov < max")


@dataclass(frozen=True)
class RunConfig:
    mode: str = "train"
    episodes: int = 1000
    env: EpisodeConfig = field(default_factory=EpisodeConfig)
    sac: SacConfig = field(default_factory=SacConfig)
    output_dir: str = "runs/default"
    checkpoint: str | None = None
    checkpoint_every: int = 50
    # trailing window for the smoothed reward curve
    smoothing_window: int = 100
    thrust: ThrustMapping = field(default_factory=ThrustMapping)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.episodes <= 0:
            raise ValueError("episodes must be positive")
        if self.checkpoint_every <= 0 or self.smoothing_window <= 0:
            raise ValueError("checkpoint_every and smoothing_window must be positive")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def with_seed(self, seed: int) -> "RunConfig":
        return self.replace(env=self.env.replace(seed=seed), sac=self.sac.replace(seed=seed))


def _plain(value):
    if isinstance(value, np.ndarray):
        return [float(v) for v in value]
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def _to_dict(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        out[f.name] = _to_dict(value) if dataclasses.is_dataclass(value) else _plain(value)
    return out


def config_to_dict(config: RunConfig) -> dict:
    return _to_dict(config)


# nested dataclass field types, by (owner, field)
_NESTED = {
    (RunConfig, "env"): EpisodeConfig,
    (RunConfig, "sac"): SacConfig,
    (RunConfig, "thrust"): ThrustMapping,
    (EpisodeConfig, "cg"): CgTrajectory,
    (EpisodeConfig, "leader_gains"): PidGains,
    (EpisodeConfig, "bounds"): ActionBounds,
}


def _from_dict(cls, data, path="") -> object:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"section '{path or 'root'}' must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in '{path or 'root'}': {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        sub = _NESTED.get((cls, key))
        kwargs[key] = _from_dict(sub, value, f"{path}.{key}".lstrip(".")) if sub else value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{path or 'root'}' section: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    return _from_dict(RunConfig, data)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(data or {})


def dump_config(config: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(config), sort_keys=False)


def save_config(config: RunConfig, path):
    Path(path).write_text(dump_config(config))
