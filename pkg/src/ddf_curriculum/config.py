"""Experiment configuration: dataclasses plus a strict INI reader/writer.

Each section maps to one dataclass; every field has a default, and keys the
dataclass does not define are rejected::

    [experiment]
    method = curriculum
    total_env_steps = 200000
    seeds = 0, 1, 2, 3

    [goalgen]
    uniform_mix_prob = 0.2
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Tuple, Union, get_args, get_origin, get_type_hints

from .agents import AgentConfig
from .goalgen import GoalGenConfig
from .replay import HerConfig

METHODS = ("curriculum", "uniform_baseline")
METHOD_ALIASES = {"uniform": "uniform_baseline", "baseline": "uniform_baseline"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    name: str = "gridnav"
    # gridnav: a map file overrides the generated two-room layout
    map_path: str = ""
    width: int = 20
    height: int = 20
    horizon: int = 50
    # pointreach
    max_step: float = 0.03
    epsilon: float = 0.05

    def build(self):
        from .envs import GridNavEnv, PointReachEnv

        if self.name == "gridnav":
            if self.map_path:
                return GridNavEnv.load_map(self.map_path, horizon=self.horizon)
            return GridNavEnv.two_room(self.width, self.height, horizon=self.horizon)
        if self.name == "pointreach":
            return PointReachEnv(max_step=self.max_step, horizon=self.horizon, epsilon=self.epsilon)
        raise ConfigError(f"unknown environment {self.name!r}")


@dataclass(frozen=True)
class ReplayConfig:
    capacity: int = 100_000


@dataclass(frozen=True)
class DdfConfig:
    num_bins: int = 5
    hidden: Tuple[int, ...] = (128, 128)
    retrain_interval: int = 5000
    recent_steps: int = 20_000
    n_pairs: int = 10_000
    epochs: int = 5
    batch_size: int = 64
    lr: float = 1e-3
    holdout_fraction: float = 0.1
    balanced: bool = True


@dataclass(frozen=True)
class RunConfig:
    method: str = "curriculum"
    total_env_steps: int = 200_000
    eval_every: int = 2000
    eval_goal_count: int = 50
    seeds: Tuple[int, ...] = (0, 1, 2, 3)
    methods: Tuple[str, ...] = METHODS
    # goal-difficulty snapshots; 0 disables
    snapshot_every: int = 0
    snapshot_goals: int = 100
    thresholds: Tuple[float, ...] = (0.5, 0.8, 0.9)
    # consecutive eval points that must clear a threshold to count as reached
    sustain_window: int = 3
    checkpoint: bool = True
    out_dir: str = "runs"


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: RunConfig = field(default_factory=RunConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    replay: ReplayConfig = field(default_factory=ReplayConfig)
    her: HerConfig = field(default_factory=HerConfig)
    ddf: DdfConfig = field(default_factory=DdfConfig)
    goalgen: GoalGenConfig = field(default_factory=GoalGenConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)

    def __post_init__(self):
        run = self.experiment
        if run.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {run.method!r}")
        for m in run.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r} in methods")
        if run.eval_every < 1 or run.total_env_steps < run.eval_every:
            raise ConfigError("need total_env_steps >= eval_every >= 1")
        if not run.seeds:
            raise ConfigError("seeds must not be empty")
        if run.sustain_window < 1:
            raise ConfigError("sustain_window must be >= 1")
        if self.ddf.retrain_interval < 1:
            raise ConfigError("ddf.retrain_interval must be >= 1")

    def with_overrides(self, **sections: Dict[str, Any]) -> "ExperimentConfig":
        """Copy with per-section field overrides, e.g. ``goalgen={"uniform_mix_prob": 1.0}``."""
        updates = {}
        for name, values in sections.items():
            if name not in SECTIONS:
                raise ConfigError(f"unknown section [{name}]")
            updates[name] = _checked(replace, getattr(self, name), **values)
        return _checked(replace, self, **updates)


SECTIONS = {f.name: f for f in fields(ExperimentConfig)}


def _checked(fn, *args, **kwargs):
    """Call ``fn``, reporting bad field names or values as ``ConfigError``."""
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _parse_value(raw: str, typ, where: str):
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if typ is int:
            return int(raw.replace("_", ""))
        if typ is float:
            return float(raw)
        if typ is str:
            return raw
        if get_origin(typ) is tuple:
            inner = get_args(typ)[0]
            return tuple(_parse_value(p, inner, where) for p in raw.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: unsupported field type {typ!r}")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    sections = {}
    for name in parser.sections():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        cls = SECTIONS[name].default_factory
        hints = get_type_hints(cls)
        values = {}
        for key, raw in parser.items(name):
            if key not in hints:
                raise ConfigError(f"unknown key {key!r} in [{name}]")
            values[key] = _parse_value(raw, hints[key], f"[{name}] {key}")
        if name == "experiment":
            if "method" in values:
                values["method"] = METHOD_ALIASES.get(values["method"], values["method"])
            if "methods" in values:
                values["methods"] = tuple(METHOD_ALIASES.get(m, m) for m in values["methods"])
        sections[name] = _checked(cls, **values)
    return _checked(ExperimentConfig, **sections)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def dump_config(config: ExperimentConfig) -> str:
    """INI text that :func:`parse_config` turns back into ``config``."""
    out = io.StringIO()
    for name in SECTIONS:
        out.write(f"[{name}]\n")
        section = getattr(config, name)
        for f in fields(section):
            out.write(f"{f.name} = {_format_value(getattr(section, f.name))}\n")
        out.write("\n")
    return out.getvalue()


def as_dict(config: ExperimentConfig) -> Dict[str, Dict[str, Any]]:
    return dataclasses.asdict(config)
