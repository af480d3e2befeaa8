"""Environment contract and episode loop for OAR control.

A training environment exposes ``reset(seed) -> EnvState`` and
``train_chunk(beta, K) -> EnvState``. :func:`run_episode` drives one episode:
at each of ``T`` decisions the agent picks an action, the OAR moves by one
grid step (or stays), the environment trains ``K`` iterations at that OAR and
reports validation loss and error, and the error decrease becomes the reward.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from roar.agent import DECREASE, INCREASE, NULL, Transition

OAR_DELTA = 0.2
NORM_CLAMP = 10.0
CSV_HEADER = ["step", "beta", "val_loss", "val_wer", "reward", "action"]


class EnvError(Exception):
    pass


class EpisodeAborted(EnvError):
    """The environment failed mid-episode; ``outcomes`` holds the steps completed."""

    def __init__(self, message, outcomes, schedule):
        super().__init__(message)
        self.outcomes = outcomes
        self.schedule = schedule


class ScheduleParseError(EnvError, ValueError):
    pass


@dataclass(frozen=True)
class EnvState:
    val_loss: float
    val_wer: float

    def __post_init__(self):
        if not (math.isfinite(self.val_loss) and math.isfinite(self.val_wer)):
            raise ValueError("environment state must be finite")
        if not 0.0 <= self.val_wer <= 100.0:
            raise ValueError(f"val_wer {self.val_wer} outside [0, 100]")


class TrainingEnvironment(Protocol):
    def reset(self, seed) -> EnvState: ...

    def train_chunk(self, beta: float, iterations: int) -> EnvState: ...


@dataclass(frozen=True)
class OarState:
    """OAR held as an integer number of grid steps so it never drifts off-grid."""

    level: int = 0
    delta: float = OAR_DELTA
    beta_max: float = 4.0
    beta_min: float = 0.0

    @property
    def max_level(self) -> int:
        return int(round(self.beta_max / self.delta))

    @property
    def min_level(self) -> int:
        return int(round(self.beta_min / self.delta))

    @property
    def beta(self) -> float:
        return round(self.level * self.delta, 10)

    @classmethod
    def at(cls, beta: float, delta: float = OAR_DELTA, beta_max: float = 4.0, beta_min: float = 0.0) -> "OarState":
        level = int(round(beta / delta))
        if abs(level * delta - beta) > 1e-9:
            raise ValueError(f"beta {beta} is not on the {delta} grid")
        state = cls(level, delta, beta_max, beta_min)
        if not state.min_level <= level <= state.max_level:
            raise ValueError(f"beta {beta} outside [{beta_min}, {beta_max}]")
        return state


def apply_action(oar: OarState, action: int) -> OarState:
    """Null keeps beta, increase/decrease move it one grid step, clamped."""
    if action == NULL:
        step = 0
    elif action == INCREASE:
        step = 1
    elif action == DECREASE:
        step = -1
    else:
        raise ValueError(f"invalid action id {action!r}")
    level = min(max(oar.level + step, oar.min_level), oar.max_level)
    return OarState(level, oar.delta, oar.beta_max, oar.beta_min)


def reward_from_wer(prev_wer: float, new_wer: float) -> float:
    """Error decrease in percentage points (positive when the error falls)."""
    return prev_wer - new_wer


@dataclass
class EpisodeConfig:
    horizon: int = 12
    iterations_per_step: int = 50
    loss_scale: float | None = None  # None: the episode's initial val_loss
    wer_scale: float = 100.0
    initial_beta: float = 0.0
    beta_max: float = 4.0
    reward_clip: float | None = None

    def __post_init__(self):
        if self.horizon < 1 or self.iterations_per_step < 1:
            raise ValueError("horizon and iterations_per_step must be >= 1")
        if self.wer_scale <= 0 or (self.loss_scale is not None and self.loss_scale <= 0):
            raise ValueError("normalisation scales must be positive")


def normalize_state(raw: EnvState, cfg: EpisodeConfig, loss_scale: float | None = None) -> np.ndarray:
    scale = loss_scale if loss_scale is not None else (cfg.loss_scale or 1.0)
    v = np.array([raw.val_loss / scale, raw.val_wer / cfg.wer_scale])
    return np.clip(v, 0.0, NORM_CLAMP)


@dataclass(frozen=True)
class StepOutcome:
    state: EnvState
    reward: float
    terminal: bool
    beta_used: float
    action: int
    loss: float | None = None


@dataclass
class OarSchedule:
    """Per-step log of one episode; one row per decision."""

    rows: list = field(default_factory=list)
    initial: EnvState | None = None

    @property
    def betas(self) -> list:
        return [r["beta"] for r in self.rows]

    def append(self, step: int, outcome: StepOutcome):
        self.rows.append(
            {
                "step": step,
                "beta": outcome.beta_used,
                "val_loss": outcome.state.val_loss,
                "val_wer": outcome.state.val_wer,
                "reward": outcome.reward,
                "action": outcome.action,
            }
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow(
                [
                    r["step"],
                    f"{r['beta']:.6f}",
                    f"{r['val_loss']:.6f}",
                    f"{r['val_wer']:.6f}",
                    f"{r['reward']:.6f}",
                    r["action"],
                ]
            )
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "OarSchedule":
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise ScheduleParseError("empty schedule file") from None
        if header != CSV_HEADER:
            raise ScheduleParseError(f"unexpected header {header}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(CSV_HEADER):
                raise ScheduleParseError(f"line {lineno}: expected {len(CSV_HEADER)} fields, got {len(rec)}")
            try:
                rows.append(
                    {
                        "step": int(rec[0]),
                        "beta": float(rec[1]),
                        "val_loss": float(rec[2]),
                        "val_wer": float(rec[3]),
                        "reward": float(rec[4]),
                        "action": int(rec[5]),
                    }
                )
            except ValueError as exc:
                raise ScheduleParseError(f"line {lineno}: {exc}") from None
        return cls(rows)

    @classmethod
    def read_csv(cls, path) -> "OarSchedule":
        return cls.from_csv(Path(path).read_text())


@dataclass
class EpisodeResult:
    schedule: OarSchedule
    outcomes: list

    @property
    def total_reward(self) -> float:
        return sum(o.reward for o in self.outcomes)

    @property
    def final_wer(self) -> float:
        return self.outcomes[-1].state.val_wer


def run_episode(agent, env, cfg: EpisodeConfig, rng, seed=None, reset: bool = True) -> EpisodeResult:
    """Run one episode of ``cfg.horizon`` decisions.

    ``agent`` needs ``act(obs, rng)``, ``store(transition)`` and
    ``train_step(rng)``. With ``reset=False`` the environment continues from
    its current state, which it must expose as ``env.state``.
    """
    state = env.reset(seed) if reset else env.state
    loss_scale = cfg.loss_scale if cfg.loss_scale is not None else (state.val_loss or 1.0)
    oar = OarState.at(cfg.initial_beta, beta_max=cfg.beta_max)
    obs = normalize_state(state, cfg, loss_scale)
    schedule = OarSchedule(initial=state)
    outcomes = []
    for t in range(1, cfg.horizon + 1):
        action = agent.act(obs, rng)
        oar = apply_action(oar, action)
        try:
            new_state = env.train_chunk(oar.beta, cfg.iterations_per_step)
        except Exception as exc:
            raise EpisodeAborted(f"environment failed at step {t}: {exc}", outcomes, schedule) from exc
        reward = reward_from_wer(state.val_wer, new_state.val_wer)
        if cfg.reward_clip is not None:
            reward = float(np.clip(reward, -cfg.reward_clip, cfg.reward_clip))
        terminal = t == cfg.horizon
        next_obs = normalize_state(new_state, cfg, loss_scale)
        agent.store(Transition(tuple(obs.tolist()), int(action), float(reward), tuple(next_obs.tolist()), terminal))
        loss = agent.train_step(rng)
        outcome = StepOutcome(new_state, reward, terminal, oar.beta, int(action), loss)
        outcomes.append(outcome)
        schedule.append(t, outcome)
        state, obs = new_state, next_obs
    return EpisodeResult(schedule, outcomes)
