"""Run configuration: a TOML file with one table per component.

Example::

    [run]
    environment = "surrogate"   # or "learner"
    mode = "roar"               # or "sweep"
    episodes = 5
    seed = 0
    out = "runs/demo"

    [episode]
    horizon = 12
    iterations_per_step = 50

    [agent]
    epsilon_decay_steps = 200

    [surrogate]
    noise_std = 0.05

    [learner]
    task_seed = 0
    shift = 0.5
"""
from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from roar.agent import AgentConfig
from roar.env import EpisodeConfig
from roar.learner_env import SyntheticTask
from roar.surrogate_env import SurrogateParams

ENVIRONMENTS = ("surrogate", "learner")
MODES = ("roar", "sweep")
SWEEP_BETAS = (0.0, 1.0, 2.0, 3.0, 4.0)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    environment: str = "surrogate"
    mode: str = "roar"
    episodes: int = 5
    seed: int = 0
    out: str = "runs/roar"
    jobs: int = 1
    task_seed: int = 0
    sweep_betas: tuple = SWEEP_BETAS
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    surrogate: SurrogateParams = field(default_factory=SurrogateParams)
    learner: SyntheticTask = field(default_factory=SyntheticTask)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.environment not in ENVIRONMENTS:
            raise ConfigError(f"environment must be one of {ENVIRONMENTS}, got {self.environment!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.episodes < 1:
            raise ConfigError("episodes must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        beta_max = self.episode.beta_max
        for b in self.sweep_betas:
            if not 0.0 <= b <= beta_max:
                raise ConfigError(f"sweep beta {b} outside [0, {beta_max}]")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in _SECTIONS}
        d["sweep_betas"] = list(self.sweep_betas)
        d["episode"] = asdict(self.episode)
        d["agent"] = asdict(self.agent)
        d["surrogate"] = self.surrogate.to_dict()
        d["learner"] = self.learner.to_dict()
        return d


_SECTIONS = {"episode": EpisodeConfig, "agent": AgentConfig, "surrogate": SurrogateParams, "learner": SyntheticTask}
_RUN_KEYS = {"environment", "mode", "episodes", "seed", "out", "jobs", "task_seed", "sweep_betas"}


def _build(cls, values: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"[{section}]: unknown keys {sorted(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc


def config_from_dict(data: dict, overrides: dict | None = None) -> RunConfig:
    data = {k: dict(v) if isinstance(v, dict) else v for k, v in data.items()}
    run = dict(data.pop("run", {}))
    learner = data.get("learner", {})
    if "task_seed" in learner:
        run.setdefault("task_seed", learner.pop("task_seed"))
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    bad = set(run) - _RUN_KEYS
    if bad:
        raise ConfigError(f"[run]: unknown keys {sorted(bad)}")
    for key, value in (overrides or {}).items():
        if value is not None:
            run[key] = value
    if "sweep_betas" in run:
        run["sweep_betas"] = tuple(float(b) for b in run["sweep_betas"])
    sections = {name: _build(cls, data.get(name, {}), name) for name, cls in _SECTIONS.items()}
    try:
        return RunConfig(**run, **sections)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read a TOML config (or use all defaults when ``path`` is None)."""
    data = {}
    if path is not None:
        try:
            data = tomllib.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data, overrides)
