"""Synthetic training environment with a known, time-varying optimal OAR.

Each chunk lowers the error by ``g0 * decay(t) * exp(-(beta - beta_opt(t))**2 / (2 sigma**2))``
plus Gaussian noise, where ``beta_opt`` is low in the first and last thirds
of the episode and high in the middle third, and ``decay(t) = 1 / (1 + t/T)``.
Because the per-step gain depends only on ``(t, beta)``, the best reachable
schedule can be found exactly by dynamic programming over the OAR grid.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from roar.env import OAR_DELTA, EnvState, OarState, apply_action


class SurrogateError(ValueError):
    pass


@dataclass
class SurrogateParams:
    # calibration values, not measurements
    wer0: float = 40.0
    base_gain: float = 2.0
    optimal_betas: tuple = (0.4, 2.0, 0.4)
    sensitivity: float = 1.0
    noise_std: float = 0.05
    floor: float = 5.0
    loss_coupling: float = 0.05
    beta_max: float = 4.0

    def __post_init__(self):
        self.optimal_betas = tuple(float(b) for b in self.optimal_betas)
        if not self.wer0 > self.floor >= 0.0:
            raise SurrogateError("need wer0 > floor >= 0")
        if self.noise_std < 0.0 or self.sensitivity <= 0.0:
            raise SurrogateError("noise_std must be >= 0 and sensitivity > 0")
        if not self.optimal_betas:
            raise SurrogateError("optimal_betas must not be empty")

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogateParams":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise SurrogateError(f"unknown surrogate keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["optimal_betas"] = list(self.optimal_betas)
        return d


def optimal_beta(params: SurrogateParams, t: int, horizon: int) -> float:
    """Piecewise-constant optimum: the episode is split into equal segments."""
    n = len(params.optimal_betas)
    segment = min(t * n // horizon, n - 1)
    return params.optimal_betas[segment]


def decay(t: int, horizon: int) -> float:
    return 1.0 / (1.0 + t / horizon)


def gain(params: SurrogateParams, t: int, beta: float, horizon: int) -> float:
    """Noise-free error decrease of the chunk taken at step ``t`` with OAR ``beta``."""
    d = beta - optimal_beta(params, t, horizon)
    return params.base_gain * decay(t, horizon) * math.exp(-d * d / (2.0 * params.sensitivity**2))


class SurrogateEnv:
    """Implements the training-environment contract.

    ``iterations`` passed to :meth:`train_chunk` is accepted for interface
    compatibility; one chunk is one surrogate time step regardless.
    """

    def __init__(self, params: SurrogateParams | None = None, horizon: int = 12):
        if horizon < 1:
            raise SurrogateError("horizon must be >= 1")
        self.params = params or SurrogateParams()
        self.horizon = horizon
        self.t = 0
        self.wer = self.params.wer0
        self.loss = self._loss_of(self.wer)
        self.rng = np.random.default_rng(0)

    def _loss_of(self, wer: float) -> float:
        return wer * self.params.loss_coupling * 20.0

    @property
    def state(self) -> EnvState:
        return EnvState(self.loss, self.wer)

    def reset(self, seed=None) -> EnvState:
        self.rng = np.random.default_rng(seed)
        self.t = 0
        self.wer = self.params.wer0
        self.loss = self._loss_of(self.wer)
        return self.state

    def train_chunk(self, beta: float, iterations: int = 1) -> EnvState:
        p = self.params
        if not -1e-9 <= beta <= p.beta_max + 1e-9:
            raise SurrogateError(f"beta {beta} outside [0, {p.beta_max}]")
        # both draws happen unconditionally so the noise stream is independent of beta
        xi = self.rng.normal(0.0, p.noise_std) if p.noise_std > 0 else 0.0
        xi_loss = self.rng.normal(0.0, p.noise_std) if p.noise_std > 0 else 0.0
        g = gain(p, self.t, beta, self.horizon)
        self.wer = min(max(p.floor, self.wer - g + xi), p.wer0 + 10.0)
        self.loss = max(0.0, self._loss_of(self.wer) + xi_loss)
        self.t += 1
        return self.state


def schedule_final_wer(params: SurrogateParams, betas, horizon: int | None = None) -> float:
    """Noise-free final error after applying ``betas`` one per step."""
    horizon = horizon or len(betas)
    total = sum(gain(params, t, b, horizon) for t, b in enumerate(betas))
    return max(params.floor, params.wer0 - total)


def oracle_best_schedule(
    params: SurrogateParams,
    horizon: int,
    iterations: int | None = None,
    initial_beta: float = 0.0,
    delta: float = OAR_DELTA,
):
    """Best reachable noise-free schedule and its final error.

    The schedule obeys the agent's constraints: each step keeps beta or moves
    it by one grid step, clamped to ``[0, beta_max]``, starting from
    ``initial_beta``. Ties prefer the lower action id. ``iterations`` is
    unused, as in :meth:`SurrogateEnv.train_chunk`.
    """
    start = OarState.at(initial_beta, delta, params.beta_max)
    n_levels = start.max_level + 1

    def successors(level):
        base = OarState(level, delta, params.beta_max)
        return [apply_action(base, a).level for a in (0, 1, 2)]

    # value[l] = best total gain from step t onwards when the previous level is l
    value = np.zeros(n_levels)
    choice = np.zeros((horizon, n_levels), dtype=np.int64)
    for t in range(horizon - 1, -1, -1):
        new_value = np.empty(n_levels)
        for lvl in range(n_levels):
            best, best_next = -math.inf, lvl
            for nxt in successors(lvl):
                v = gain(params, t, round(nxt * delta, 10), horizon) + value[nxt]
                if v > best:
                    best, best_next = v, nxt
            new_value[lvl] = best
            choice[t, lvl] = best_next
        value = new_value

    betas, lvl = [], start.level
    for t in range(horizon):
        lvl = int(choice[t, lvl])
        betas.append(round(lvl * delta, 10))
    return betas, schedule_final_wer(params, betas, horizon)
