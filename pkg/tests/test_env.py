import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roar.agent import DECREASE, INCREASE, NULL, AgentConfig, DqnAgent, FixedAgent
from roar.env import (
    CSV_HEADER,
    EnvState,
    EpisodeAborted,
    EpisodeConfig,
    OarSchedule,
    OarState,
    ScheduleParseError,
    apply_action,
    normalize_state,
    reward_from_wer,
    run_episode,
)
from roar.surrogate_env import SurrogateEnv


class ScriptedAgent:
    def __init__(self, actions):
        self.actions = list(actions)
        self.stored = []

    def act(self, obs, rng):
        return self.actions.pop(0)

    def store(self, t):
        self.stored.append(t)

    def train_step(self, rng):
        return None


class FailingEnv(SurrogateEnv):
    def __init__(self, fail_at):
        super().__init__()
        self.fail_at = fail_at

    def train_chunk(self, beta, iterations=1):
        if self.t + 1 == self.fail_at:
            raise RuntimeError("boom")
        return super().train_chunk(beta, iterations)


def test_apply_action_examples():
    s = OarState.at(1.0)
    assert apply_action(s, NULL).beta == 1.0
    assert apply_action(s, INCREASE).beta == 1.2
    assert apply_action(s, DECREASE).beta == 0.8
    assert apply_action(OarState.at(0.0), DECREASE).beta == 0.0
    assert apply_action(OarState.at(4.0), INCREASE).beta == 4.0
    with pytest.raises(ValueError):
        apply_action(s, 3)


@given(st.lists(st.sampled_from([NULL, INCREASE, DECREASE]), max_size=200))
def test_beta_stays_on_grid_and_in_range(actions):
    s = OarState.at(0.0)
    for a in actions:
        s = apply_action(s, a)
        assert 0.0 <= s.beta <= 4.0
        assert abs(s.beta / 0.2 - round(s.beta / 0.2)) < 1e-9
        assert s.beta == round(s.level * 0.2, 10)


def test_oar_at_rejects_off_grid():
    with pytest.raises(ValueError):
        OarState.at(0.3)
    with pytest.raises(ValueError):
        OarState.at(4.2)


def test_reward():
    assert reward_from_wer(40.0, 38.0) == 2.0
    assert reward_from_wer(38.0, 40.0) == -2.0
    assert reward_from_wer(30.0, 30.0) == 0.0


def test_normalize_state():
    cfg = EpisodeConfig()
    np.testing.assert_allclose(normalize_state(EnvState(2.0, 50.0), cfg, 4.0), [0.5, 0.5])
    np.testing.assert_allclose(normalize_state(EnvState(100.0, 0.0), cfg, 1.0), [10.0, 0.0])


def test_env_state_validation():
    with pytest.raises(ValueError):
        EnvState(float("nan"), 1.0)
    with pytest.raises(ValueError):
        EnvState(1.0, 101.0)


def test_scripted_episode_betas_and_rows():
    actions = [INCREASE] * 5 + [NULL] * 3 + [DECREASE] * 4
    result = run_episode(ScriptedAgent(actions), SurrogateEnv(), EpisodeConfig(), np.random.default_rng(0), seed=1)
    want = [0.2, 0.4, 0.6, 0.8, 1.0, 1.0, 1.0, 1.0, 0.8, 0.6, 0.4, 0.2]
    assert result.schedule.betas == pytest.approx(want, abs=1e-12)
    assert [r["step"] for r in result.schedule.rows] == list(range(1, 13))
    assert [o.terminal for o in result.outcomes] == [False] * 11 + [True]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 30))
def test_telescoping_rewards(seed, horizon):
    cfg = EpisodeConfig(horizon=horizon)
    agent = DqnAgent(AgentConfig(warmup_steps=5, batch_size=4), seed=seed)
    result = run_episode(agent, SurrogateEnv(horizon=horizon), cfg, np.random.default_rng(seed), seed=seed)
    wer0 = result.schedule.initial.val_wer
    assert abs(result.total_reward - (wer0 - result.final_wer)) <= 1e-9
    assert len(result.schedule.rows) == horizon


def test_transitions_chain():
    agent = ScriptedAgent([INCREASE] * 12)
    run_episode(agent, SurrogateEnv(), EpisodeConfig(), np.random.default_rng(0), seed=2)
    for a, b in zip(agent.stored, agent.stored[1:]):
        assert a.next_state == b.state
    # the initial normalised loss is exactly 1 with the default loss_scale
    assert agent.stored[0].state[0] == 1.0


def test_initial_beta():
    result = run_episode(FixedAgent(), SurrogateEnv(), EpisodeConfig(initial_beta=2.0), np.random.default_rng(0), seed=0)
    assert set(result.schedule.betas) == {2.0}


def test_reward_clip():
    cfg = EpisodeConfig(reward_clip=0.5)
    result = run_episode(FixedAgent(), SurrogateEnv(), cfg, np.random.default_rng(0), seed=0)
    assert all(abs(o.reward) <= 0.5 for o in result.outcomes)


def test_env_failure_keeps_partial_outcomes():
    with pytest.raises(EpisodeAborted) as info:
        run_episode(FixedAgent(), FailingEnv(fail_at=4), EpisodeConfig(), np.random.default_rng(0), seed=0)
    assert len(info.value.outcomes) == 3 and len(info.value.schedule.rows) == 3


def test_continue_without_reset():
    env = SurrogateEnv(horizon=24)
    env.reset(5)
    first = run_episode(FixedAgent(), env, EpisodeConfig(), np.random.default_rng(0), reset=False)
    second = run_episode(FixedAgent(), env, EpisodeConfig(), np.random.default_rng(0), reset=False)
    assert second.schedule.initial == first.outcomes[-1].state


def test_schedule_csv_round_trip(tmp_path):
    result = run_episode(ScriptedAgent([INCREASE, NULL, DECREASE] * 4), SurrogateEnv(), EpisodeConfig(), np.random.default_rng(0), seed=3)
    p = tmp_path / "s.csv"
    result.schedule.write_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert all(len(f.split(".")[1]) == 6 for f in lines[1].split(",")[1:5])
    back = OarSchedule.read_csv(p)
    assert [r["action"] for r in back.rows] == [1, 0, 2] * 4
    for a, b in zip(back.rows, result.schedule.rows):
        assert a["val_wer"] == pytest.approx(b["val_wer"], abs=5e-7)


@pytest.mark.parametrize(
    "text",
    ["", "a,b\n", ",".join(CSV_HEADER) + "\n1,0.2,1\n", ",".join(CSV_HEADER) + "\nx,0.2,1,1,1,0\n"],
)
def test_schedule_parse_errors(text):
    with pytest.raises(ScheduleParseError):
        OarSchedule.from_csv(text)


def test_config_validation():
    with pytest.raises(ValueError):
        EpisodeConfig(horizon=0)
    with pytest.raises(ValueError):
        EpisodeConfig(wer_scale=0)


def test_single_step_episode():
    agent = ScriptedAgent([INCREASE])
    result = run_episode(agent, SurrogateEnv(horizon=1), EpisodeConfig(horizon=1), np.random.default_rng(0), seed=0)
    assert len(agent.stored) == 1 and agent.stored[0].terminal
    assert len(result.outcomes) == 1


def test_null_agent_constant_schedule():
    result = run_episode(ScriptedAgent([NULL] * 12), SurrogateEnv(), EpisodeConfig(initial_beta=1.4), np.random.default_rng(0), seed=0)
    assert result.schedule.betas == [1.4] * 12


def test_iterations_per_step_positive():
    with pytest.raises(ValueError):
        EpisodeConfig(iterations_per_step=0)
