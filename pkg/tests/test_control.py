from __future__ import annotations

import numpy as np
import pytest

from rlstorage.agent import ACTION_NOOP, ACTION_QUEUE_UP, StaticAgent, TabularAgent
from rlstorage.control import (
    ControlError,
    LoopConfig,
    LoopState,
    compute_reward,
    feedback_step,
    gain,
    perf_total,
    run_episode,
    smooth_queue_adjust,
    util_eff,
)
from rlstorage.simenv import (
    DEVICE_PRESETS,
    MetricsSample,
    Simulator,
    TunableConfig,
)
from rlstorage.trace import gen_random, gen_sequential


def _sample(completions=10, nbytes=40_960, p99=200.0, window=50_000.0) -> MetricsSample:
    return MetricsSample(window_us=window, completions=completions, iops=0.0,
                         mean_latency_us=100.0, p99_latency_us=p99,
                         cache_hit_rate=0.5, utilization=0.5,
                         bytes_transferred=nbytes)


def test_loop_config_validation():
    LoopConfig()
    with pytest.raises(ControlError):
        LoopConfig(decision_interval_us=0)
    with pytest.raises(ControlError):
        LoopConfig(latency_norm_us=0)
    with pytest.raises(ControlError):
        LoopConfig(smoothing_alpha=0.0)


def test_reward_formula():
    cfg = LoopConfig(reward_lambda=0.5, throughput_norm=1e8, latency_norm_us=10_000.0)
    m = _sample(nbytes=5_000_000, p99=2000.0, window=50_000.0)
    throughput = 5_000_000 / 0.05
    expected = throughput / 1e8 - 0.5 * (2000.0 / 10_000.0)
    assert compute_reward(None, m, cfg) == pytest.approx(expected)


def test_reward_empty_interval_is_penalty():
    cfg = LoopConfig(reward_lambda=0.7)
    empty = MetricsSample(50_000.0, 0, 0.0, None, None, None, 0.0, 0)
    assert compute_reward(None, empty, cfg) == pytest.approx(-0.7)


def test_smooth_queue_adjust():
    assert smooth_queue_adjust(64, 32, 0.5) == pytest.approx(16.0)
    assert smooth_queue_adjust(8, 32, 0.5) == pytest.approx(-12.0)
    assert smooth_queue_adjust(10, 10, 0.9) == 0.0


def test_perf_total_formula():
    # 2*10 + 3*20 + 0.5*(4+6) = 85
    assert perf_total([2, 3], [10, 20], 0.5, [4, 6]) == pytest.approx(85.0)
    assert perf_total([], [], 1.0, []) == 0.0
    with pytest.raises(ControlError):
        perf_total([1, 2], [1], 0.5, [])


def test_util_eff_formula():
    assert util_eff(50.0, [20, 30]) == pytest.approx(1.0)
    assert util_eff(25.0, [100]) == pytest.approx(0.25)
    assert util_eff(200.0, [100]) == pytest.approx(2.0)  # deliberately uncapped
    with pytest.raises(ControlError):
        util_eff(10.0, [])
    with pytest.raises(ControlError):
        util_eff(10.0, [0.0, 0.0])


def test_gain_formula():
    assert gain([3, 4, 5], [1, 1, 1], beta=2.0) == pytest.approx(18.0)
    assert gain([1.0], [1.0]) == 0.0
    with pytest.raises(ControlError):
        gain([1, 2], [1])


def _run_interval(sim, agent, loop, state, n=1, terminal=False):
    out = None
    for _ in range(n):
        m = _sample()
        out = feedback_step(sim, agent, loop, state, [], m, terminal=terminal)
    return out


def test_reward_trails_action_by_one_interval():
    """The stored transition pairs the previous action with this reward."""

    class SpyAgent(StaticAgent):
        def __init__(self):
            self.learned = []

        def learn(self, transition):
            self.learned.append(transition)

    sim = Simulator(DEVICE_PRESETS["nvme"], TunableConfig(8, 32, 4096))
    agent = SpyAgent()
    loop = LoopConfig()
    state = LoopState()
    _run_interval(sim, agent, loop, state)
    assert agent.learned == []  # no previous action yet
    _run_interval(sim, agent, loop, state)
    assert len(agent.learned) == 1
    t = agent.learned[0]
    assert t.action == ACTION_NOOP
    assert t.reward == state.rewards[1]


def test_feedback_disabled_skips_learning():
    class SpyAgent(StaticAgent):
        def __init__(self):
            self.learned = []

        def learn(self, transition):
            self.learned.append(transition)

    sim = Simulator(DEVICE_PRESETS["nvme"], TunableConfig(8, 32, 4096))
    agent = SpyAgent()
    state = LoopState()
    _run_interval(sim, agent, LoopConfig(feedback_enabled=False), state, n=3)
    assert agent.learned == []


def test_collector_disabled_blinds_features():
    sim = Simulator(DEVICE_PRESETS["nvme"], TunableConfig(8, 32, 4096))
    state = LoopState()
    agent = TabularAgent(seed=0)
    loop = LoopConfig(collector_enabled=False)
    for _ in range(3):
        m = _sample()
        feedback_step(sim, agent, loop, state, [], m)
    for rec in state.records:
        assert rec.features.as_tuple() == (0.0,) * 7


def test_smoothed_actuation_damps_queue_moves():
    class QueueUpAgent(StaticAgent):
        def act(self, state, explore=True):
            return ACTION_QUEUE_UP

    sim = Simulator(DEVICE_PRESETS["nvme"], TunableConfig(8, 32, 4096))
    state = LoopState()
    loop = LoopConfig(smoothed_queue_actuation=True, smoothing_alpha=0.5)
    # proposal doubles 32 -> 64; damped step is trunc(0.5 * 32) = 16
    feedback_step(sim, QueueUpAgent(), loop, state, [], _sample())
    assert sim.config.queue_depth == 48


def test_run_episode_interval_grid():
    nvme = DEVICE_PRESETS["nvme"]
    trace = gen_random(1 << 24, 200, 4096, 1.0, 100, seed=1)  # 20 ms of arrivals
    loop = LoopConfig(decision_interval_us=5000.0)
    result = run_episode(nvme, TunableConfig(0, 32, 256), trace, StaticAgent(), loop)
    assert result.total_completions == 200
    assert result.duration_us % 5000.0 == 0.0
    assert len(result.records) == result.duration_us / 5000.0
    assert [r.index for r in result.records] == list(range(len(result.records)))
    assert result.reward_sum == pytest.approx(sum(result.rewards()))


def test_run_episode_eval_freezes_agent():
    nvme = DEVICE_PRESETS["nvme"]
    trace = gen_sequential(0, 500, 4096, 50, address_space=1 << 26)
    agent = TabularAgent(seed=5)
    agent.values[:] = np.random.default_rng(1).normal(size=agent.values.shape)
    before = agent.values.copy()
    run_episode(nvme, TunableConfig(8, 32, 512), trace, agent, LoopConfig(),
                explore=False)
    assert np.array_equal(agent.values, before)


def test_run_episode_training_updates_agent():
    nvme = DEVICE_PRESETS["nvme"]
    trace = gen_random(1 << 24, 2000, 4096, 0.8, 25, seed=2)
    agent = TabularAgent(seed=5)
    before = agent.values.copy()
    run_episode(nvme, TunableConfig(8, 32, 512), trace, agent, LoopConfig(),
                explore=True)
    assert not np.array_equal(agent.values, before)


def test_run_episode_discounted_return_matches_rewards():
    nvme = DEVICE_PRESETS["nvme"]
    trace = gen_random(1 << 24, 300, 4096, 1.0, 50, seed=3)
    result = run_episode(nvme, TunableConfig(0, 16, 256), trace, StaticAgent(),
                         LoopConfig(decision_interval_us=4000.0), return_gamma=0.9)
    direct = 0.0
    for r in reversed(result.rewards()):
        direct = r + 0.9 * direct
    assert result.discounted_return == pytest.approx(direct)


def test_run_episode_collect_records_off():
    nvme = DEVICE_PRESETS["nvme"]
    trace = gen_random(1 << 24, 100, 4096, 1.0, 50, seed=4)
    result = run_episode(nvme, TunableConfig(0, 16, 256), trace, StaticAgent(),
                         collect_records=False)
    assert result.records == ()
    assert result.total_completions == 100


def test_summarize_used_by_loop_matches_records():
    nvme = DEVICE_PRESETS["nvme"]
    trace = gen_random(1 << 24, 400, 4096, 1.0, 30, seed=6)
    result = run_episode(nvme, TunableConfig(0, 8, 128), trace, StaticAgent(),
                         LoopConfig(decision_interval_us=3000.0))
    assert sum(r.metrics.completions for r in result.records) == 400
    total = sum(r.metrics.bytes_transferred for r in result.records)
    assert total == result.total_bytes == 400 * 4096
