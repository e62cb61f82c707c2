"""Experiment configuration: TOML files with one section per component.

Every key must be known; unknown sections or keys raise ``ConfigError``.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from recomlab.dynamics import RobotParams
from recomlab.env import EnvConfig, EpisodeConfig, RewardWeights, WindSchedule
from recomlab.ppo import PpoConfig
from recomlab.recom import RecomConfig

VARIANTS = ("standard", "l2", "recom_l2")
DEFAULT_L2 = 1e-4


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    n_episodes: int = 10
    wind_speed: float = 3.0
    init_range: float = 2.0
    success_radius: float = 0.25
    # seconds at the end of each episode used for success and MSE
    final_window: float = 1.0
    mse_mode: str = "final"  # "final" or "full"
    seed: int = 12345

    def __post_init__(self):
        if self.mse_mode not in ("final", "full"):
            raise ConfigError("eval.mse_mode must be 'final' or 'full'")
        if self.n_episodes < 1:
            raise ConfigError("eval.n_episodes must be >= 1")


@dataclass(frozen=True)
class WindConfig:
    enabled: bool = True
    segment_length: int = 2_000_000
    speeds: tuple[float, ...] = (3.0, 2.0, 2.5, 1.5, 2.5)
    direction: tuple[float, float, float] = (1.0, 0.0, 0.0)
    random_direction: bool = False

    def schedule(self) -> WindSchedule:
        return WindSchedule(self.segment_length, tuple(self.speeds), tuple(self.direction),
                            self.random_direction)


@dataclass(frozen=True)
class ExperimentConfig:
    variant: str = "recom_l2"
    seed: int = 0
    total_timesteps: int = 20_000_000
    output_dir: str = "runs/default"
    deterministic: bool = True
    checkpoint_every: int = 1_000_000
    # None resolves to 0 for "standard" and DEFAULT_L2 otherwise
    l2_lambda: float | None = None
    dormant_tau: float = 0.025
    probe_size: int = 512
    robot: RobotParams = field(default_factory=RobotParams)
    reward: RewardWeights = field(default_factory=RewardWeights)
    wind: WindConfig = field(default_factory=WindConfig)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    recom: RecomConfig = field(default_factory=RecomConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.total_timesteps < 0:
            raise ConfigError("total_timesteps must be non-negative")
        if self.checkpoint_every <= 0:
            raise ConfigError("checkpoint_every must be positive")
        if self.l2_lambda is None:
            object.__setattr__(self, "l2_lambda", 0.0 if self.variant == "standard" else DEFAULT_L2)
        if self.variant == "standard" and self.l2_lambda != 0.0:
            raise ConfigError("the standard variant trains without L2 (l2_lambda must be 0)")
        if self.l2_lambda < 0:
            raise ConfigError("l2_lambda must be non-negative")

    @property
    def recom_enabled(self) -> bool:
        return self.variant == "recom_l2"

    def env_config(self) -> EnvConfig:
        return EnvConfig(self.robot, self.reward, self.wind.schedule(), self.episode, self.wind.enabled)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return _to_plain(dataclasses.asdict(self))


SECTIONS = {
    "robot": RobotParams,
    "reward": RewardWeights,
    "wind": WindConfig,
    "episode": EpisodeConfig,
    "ppo": PpoConfig,
    "recom": RecomConfig,
    "eval": EvalConfig,
}
TOP_LEVEL = "experiment"


def _to_plain(obj):
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def _build(cls, values: dict, where: str):
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")
    kwargs = {}
    for k, v in values.items():
        kwargs[k] = tuple(v) if isinstance(v, list) else v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


def from_dict(data: dict) -> ExperimentConfig:
    """Build a config from nested dicts (the parsed TOML layout)."""
    unknown = sorted(set(data) - set(SECTIONS) - {TOP_LEVEL})
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    top = dict(data.get(TOP_LEVEL, {}))
    nested = {name: _build(cls, data.get(name, {}), name) for name, cls in SECTIONS.items()}
    top_fields = {f.name for f in dataclasses.fields(ExperimentConfig)} - set(SECTIONS)
    bad = sorted(set(top) - top_fields)
    if bad:
        raise ConfigError(f"unknown key(s) in [{TOP_LEVEL}]: {', '.join(bad)}")
    try:
        return ExperimentConfig(**top, **nested)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def manifest_dict(cfg: ExperimentConfig) -> dict:
    """Config in file layout: ``experiment`` section plus one per component."""
    d = cfg.to_dict()
    out = {TOP_LEVEL: {k: v for k, v in d.items() if k not in SECTIONS}}
    out.update({k: d[k] for k in SECTIONS})
    return out


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return from_dict(data)


def preset_path(name: str) -> Path:
    return Path(str(resources.files("recomlab") / "configs" / f"{name}.toml"))


def load_preset(name: str) -> ExperimentConfig:
    """Bundled configs: ``paper`` (full budget), ``desk`` (100x scaled), ``desk_nowind``."""
    path = preset_path(name)
    if not path.exists():
        raise ConfigError(f"no bundled preset named {name!r}")
    return load_config(path)
