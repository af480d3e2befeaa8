import itertools
import math

import numpy as np
import pytest

from roar.env import OAR_DELTA
from roar.surrogate_env import (
    SurrogateEnv,
    SurrogateError,
    SurrogateParams,
    decay,
    gain,
    optimal_beta,
    oracle_best_schedule,
    schedule_final_wer,
)

NOISELESS = SurrogateParams(noise_std=0.0)


def exhaustive_best(params, horizon, initial_level=0):
    """Enumerate every action sequence; vectorised over sequences, looped over steps."""
    max_level = int(round(params.beta_max / OAR_DELTA))
    table = np.array([[gain(params, t, round(l * OAR_DELTA, 10), horizon) for l in range(max_level + 1)] for t in range(horizon)])
    seqs = np.array(list(itertools.product((0, 1, -1), repeat=horizon)), dtype=np.int64)
    level = np.full(len(seqs), initial_level)
    total = np.zeros(len(seqs))
    for t in range(horizon):
        level = np.clip(level + seqs[:, t], 0, max_level)
        total += table[t, level]
    return max(params.floor, params.wer0 - total.max())


def test_optimal_beta_thirds():
    p = SurrogateParams()
    assert [optimal_beta(p, t, 12) for t in range(12)] == [0.4] * 4 + [2.0] * 4 + [0.4] * 4


def test_decay():
    assert decay(0, 12) == 1.0
    assert decay(12, 12) == 0.5


def test_gain_peak_at_optimum():
    p = SurrogateParams()
    assert gain(p, 0, 0.4, 12) == pytest.approx(2.0)
    assert gain(p, 5, 2.0, 12) > gain(p, 5, 1.0, 12) > gain(p, 5, 0.0, 12)


@pytest.mark.parametrize("horizon", [3, 6, 9, 12])
def test_dp_matches_exhaustive_search(horizon):
    _, dp = oracle_best_schedule(NOISELESS, horizon)
    assert dp == pytest.approx(exhaustive_best(NOISELESS, horizon), abs=1e-12)


def test_dp_schedule_is_reachable_and_scores_itself():
    betas, wer = oracle_best_schedule(NOISELESS, 12)
    prev = 0.0
    for b in betas:
        assert round(abs(b - prev) / OAR_DELTA, 9) in (0.0, 1.0)
        prev = b
    assert schedule_final_wer(NOISELESS, betas, 12) == wer
    assert max(betas[4:8]) > max(betas[:2]) and betas[-1] < max(betas)


def test_dp_beats_every_fixed_beta():
    _, best = oracle_best_schedule(NOISELESS, 12)
    for b in np.arange(0, 4.01, 0.2):
        assert best <= schedule_final_wer(NOISELESS, [b] * 12, 12) + 1e-12


def test_noise_free_env_matches_closed_form():
    env = SurrogateEnv(NOISELESS, 12)
    env.reset(0)
    betas = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.2, 1.0, 0.8, 0.6, 0.4]
    for b in betas:
        state = env.train_chunk(b, 50)
    assert state.val_wer == pytest.approx(schedule_final_wer(NOISELESS, betas, 12), abs=1e-9)


def test_noise_stream_independent_of_beta():
    a, b = SurrogateEnv(horizon=12), SurrogateEnv(horizon=12)
    a.reset(7)
    b.reset(7)
    for t in range(12):
        wa = a.train_chunk(0.0).val_wer
        wb = b.train_chunk(3.0).val_wer
    gap = sum(gain(a.params, t, 0.0, 12) - gain(a.params, t, 3.0, 12) for t in range(12))
    assert wb - wa == pytest.approx(gap, abs=1e-9)


def test_reset_reproducible():
    env = SurrogateEnv()
    runs = []
    for _ in range(2):
        env.reset(11)
        runs.append([env.train_chunk(1.0).val_wer for _ in range(12)])
    assert runs[0] == runs[1]


def test_floor_respected():
    env = SurrogateEnv(SurrogateParams(wer0=6.0, floor=5.0, noise_std=0.0), 12)
    env.reset(0)
    for _ in range(12):
        assert env.train_chunk(0.4).val_wer >= 5.0


def test_rejects_out_of_range_beta():
    env = SurrogateEnv()
    env.reset(0)
    with pytest.raises(SurrogateError):
        env.train_chunk(4.2)


def test_params_validation_and_dict():
    with pytest.raises(SurrogateError):
        SurrogateParams(wer0=4.0, floor=5.0)
    with pytest.raises(SurrogateError):
        SurrogateParams.from_dict({"nope": 1})
    p = SurrogateParams(optimal_betas=[1, 2])
    assert SurrogateParams.from_dict(p.to_dict()) == p


def test_reset_defaults():
    state = SurrogateEnv().reset(0)
    assert state.val_wer == 40.0 and state.val_loss == 40.0


def test_drop_at_optimum_and_in_tail():
    env = SurrogateEnv(NOISELESS, 12)
    env.reset(0)
    assert 40.0 - env.train_chunk(0.4).val_wer == pytest.approx(2.0 * decay(0, 12))
    w = env.state.val_wer
    # |beta - beta*| = 3.6 is the farthest reachable point; the bound uses |delta| = 4
    assert w - env.train_chunk(4.0).val_wer == pytest.approx(2.0 * decay(1, 12) * math.exp(-(3.6**2) / 2), rel=1e-9)
    assert 2.0 * math.exp(-8) < 1e-3


def test_noise_free_wer_non_increasing():
    rng = np.random.default_rng(0)
    env = SurrogateEnv(NOISELESS, 12)
    env.reset(0)
    prev = env.state.val_wer
    for _ in range(12):
        w = env.train_chunk(float(rng.choice(np.arange(0, 4.01, 0.2)))).val_wer
        assert w <= prev
        prev = w


def test_stationary_optimum():
    params = SurrogateParams(noise_std=0.0, optimal_betas=(0.4,))
    betas, _ = oracle_best_schedule(params, 12, initial_beta=0.4)
    assert betas == [0.4] * 12


def test_per_step_argmax_vs_reachable_dp():
    # the unconstrained per-step argmax jumps straight to 2.0, which one-step moves cannot reach
    greedy = [optimal_beta(NOISELESS, t, 12) for t in range(12)]
    dp_betas, dp_wer = oracle_best_schedule(NOISELESS, 12)
    assert schedule_final_wer(NOISELESS, greedy, 12) < dp_wer
    assert dp_wer == pytest.approx(exhaustive_best(NOISELESS, 12), abs=1e-12)
