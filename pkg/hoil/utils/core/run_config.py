"""
Run configuration: one JSON document, every field defaulted.

Sections map onto the frozen config dataclasses of each subsystem. A user
document only names what it changes; unknown keys are rejected with the
closest valid names as suggestions.
"""
import dataclasses
import json
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np
from thefuzz import process

from hoil.config import config
from hoil.utils.core.config_loader import load_json_file
from hoil.utils.core.ctrefine import CTRefineConfig
from hoil.utils.core.errors import ConfigError
from hoil.utils.core.gridpool import CPPoolConfig
from hoil.utils.core.logging import debug, log
from hoil.utils.core.losses import FinetuneWeights, HOICLConfig, PretrainWeights
from hoil.utils.core.model import Mode, ModelConfig
from hoil.utils.core.optim import OptimizerConfig
from hoil.utils.core.temporal import FilterConfig
from hoil.utils.sim.contact import ContactConfig
from hoil.utils.sim.lidar import SensorModel
from hoil.utils.sim.motion import MOTIONS

KEYPOINT_CONTACT_SOURCES = ("mesh", "zero_velocity")


@dataclass(frozen=True)
class SimConfig:
    azimuth_min_deg: float = -60.0
    azimuth_max_deg: float = 60.0
    azimuth_step_deg: float = 0.2
    elevation_min_deg: float = -25.0
    elevation_max_deg: float = 5.0
    elevation_step_deg: float = 0.33
    max_range: float = 30.0
    range_noise: float = 0.0
    dt: float = 0.1
    motion: str = "gait"
    cadence: float = 1.0
    pose_scale: float = 0.35
    subject_distance: float = 8.0
    ground_z: float = -1.8
    wall_y: Optional[float] = None
    with_object: bool = True
    hand_gap_range: Tuple[float, float] = (0.01, 0.08)
    object_dropout: float = 0.5
    crop_margin: float = 0.3
    max_points: int = 1024
    keypoint_contact: str = "mesh"
    zero_velocity_threshold: float = 0.15
    zero_velocity_window: int = 3

    def __post_init__(self):
        object.__setattr__(self, "hand_gap_range", tuple(float(g) for g in self.hand_gap_range))
        if self.motion not in MOTIONS:
            raise ConfigError(f"sim.motion must be one of {MOTIONS}, got '{self.motion}'")
        if self.keypoint_contact not in KEYPOINT_CONTACT_SOURCES:
            raise ConfigError(f"sim.keypoint_contact must be one of {KEYPOINT_CONTACT_SOURCES}")
        lo, hi = self.hand_gap_range
        if not 0 <= lo <= hi:
            raise ConfigError("sim.hand_gap_range must satisfy 0 <= low <= high")
        if not 0.0 <= self.object_dropout <= 1.0:
            raise ConfigError("sim.object_dropout must lie in [0, 1]")
        if self.max_points < 1 or not self.dt > 0:
            raise ConfigError("sim.max_points and sim.dt must be positive")

    def sensor(self) -> SensorModel:
        return SensorModel(
            origin=(0.0, 0.0, 0.0),
            azimuth_range=(np.radians(self.azimuth_min_deg), np.radians(self.azimuth_max_deg)),
            azimuth_step=np.radians(self.azimuth_step_deg),
            elevation_range=(np.radians(self.elevation_min_deg), np.radians(self.elevation_max_deg)),
            elevation_step=np.radians(self.elevation_step_deg),
            max_range=self.max_range,
        )


@dataclass(frozen=True)
class PathsConfig:
    data_dir: str = "data"
    out_dir: str = "runs"


@dataclass(frozen=True)
class DatasetMixConfig:
    sources: Tuple[str, ...] = ()
    ratios: Tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        if len(self.sources) != len(self.ratios):
            raise ConfigError("dataset_mix.sources and dataset_mix.ratios differ in length")


@dataclass(frozen=True)
class RunConfig:
    mode: Mode = Mode.PRETRAIN
    seed: int = 0
    profile: str = "SMPL15_OBJ"
    finetune_profile: str = "SMPL15"
    model: ModelConfig = ModelConfig()
    cppool: CPPoolConfig = CPPoolConfig()
    hoicl: HOICLConfig = HOICLConfig()
    pretrain_weights: PretrainWeights = PretrainWeights()
    finetune_weights: FinetuneWeights = FinetuneWeights()
    contact: ContactConfig = ContactConfig()
    filters: FilterConfig = FilterConfig()
    ctrefine: CTRefineConfig = CTRefineConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    sim: SimConfig = SimConfig()
    paths: PathsConfig = PathsConfig()
    dataset_mix: DatasetMixConfig = DatasetMixConfig()
    source_path: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))

    @property
    def learning_rate(self) -> float:
        return self.optimizer.lr_pretrain if self.mode == Mode.PRETRAIN else self.optimizer.lr_finetune

    def with_mode(self, mode: Mode) -> "RunConfig":
        return dataclasses.replace(self, mode=Mode(mode))


def _suggest(key: str, choices) -> str:
    matches = [name for name, score in process.extract(key, list(choices), limit=3) if score >= 50]
    return f"; did you mean {', '.join(repr(m) for m in matches)}?" if matches else ""


def _build(cls, data: Dict[str, Any], section: str):
    if not isinstance(data, dict):
        raise ConfigError(f"config section '{section or 'root'}' must be a JSON object")
    known = {f.name: f for f in dataclasses.fields(cls) if f.name != "source_path"}
    values = {}
    for key, value in data.items():
        where = f"{section}.{key}" if section else key
        if key not in known:
            raise ConfigError(f"unknown config key '{where}'{_suggest(key, known)}")
        default = known[key].default
        if dataclasses.is_dataclass(default):
            values[key] = _build(type(default), value, where) if value is not None else default
            values[key] = _merge(default, values[key], value)
        elif isinstance(default, tuple) and isinstance(value, list):
            values[key] = tuple(value)
        else:
            values[key] = value
    try:
        return cls(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid config section '{section or 'root'}': {e}")


def _merge(default, built, raw):
    """Keeps defaults for every key the user section left out."""
    if not isinstance(raw, dict):
        return built
    changes = {k: getattr(built, k) for k in raw}
    try:
        return dataclasses.replace(default, **changes)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e))


def _resolve_paths(paths: PathsConfig, base_dir: str) -> PathsConfig:
    def resolve(p: str) -> str:
        p = os.path.expanduser(p)
        return p if os.path.isabs(p) else os.path.normpath(os.path.join(base_dir, p))
    return PathsConfig(resolve(paths.data_dir), resolve(paths.out_dir))


def load_run_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Defaults, then the JSON document at `path`, then `overrides`, then HOIL_SEED."""
    data: Dict[str, Any] = {}
    base_dir = os.getcwd()
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            data = load_json_file(path, default=None, required=True)
        except (ValueError, json.JSONDecodeError) as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}")
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        base_dir = os.path.dirname(os.path.abspath(path))
    for key, value in (overrides or {}).items():
        data[key] = value
    cfg = _build(RunConfig, data, "")
    cfg = dataclasses.replace(cfg, paths=_resolve_paths(cfg.paths, base_dir), source_path=path)
    config.reload_seed()
    if config.HOIL_SEED is not None and config.HOIL_SEED != cfg.seed:
        log(f"HOIL_SEED overrides config seed {cfg.seed} -> {config.HOIL_SEED}")
        cfg = dataclasses.replace(cfg, seed=config.HOIL_SEED)
    debug(f"Loaded run config from {path or 'defaults'}")
    return cfg


def _plain(value):
    if dataclasses.is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in dataclasses.fields(value) if f.name != "source_path"}
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (tuple, list)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def run_config_to_dict(cfg: RunConfig) -> Dict[str, Any]:
    return _plain(cfg)


def run_config_from_dict(data: Dict[str, Any]) -> RunConfig:
    return _build(RunConfig, data, "")
