"""The closed loop: collect a window, score it, let the agent move a knob.

An episode walks a trace in fixed decision intervals.  Each interval the
collector folds completions into features, the agent picks an action which
is applied to the simulator, the reward for the interval just closed is
computed from its throughput and tail latency, and the transition pairing
that reward with the *previous* action is handed to the agent.  The reward
therefore always trails the action it scores by one interval; the first
interval stores no transition.

Ablation switches: with feedback disabled transitions are never handed to
the agent (parameters stay frozen); with the collector disabled the agent
sees a frozen all-zero feature vector instead of measurements.

Also houses the analytical scoring formulas reported alongside experiment
results (perf_total, util_eff, gain, smooth_queue_adjust).  These are
reporting diagnostics; the event model in simenv defines actual behaviour.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from .agent import Transition, apply_action, discounted_return
from .features import ZERO_FEATURES, FeatureVector, extract
from .simenv import (
    DeviceProfile,
    MetricsSample,
    Simulator,
    TunableConfig,
    summarize,
)
from .trace import Trace


class ControlError(ValueError):
    pass


@dataclass(frozen=True)
class LoopConfig:
    """Decision cadence, reward shape, and ablation switches."""

    decision_interval_us: float = 50_000.0
    reward_lambda: float = 0.5
    throughput_norm: float = 1e8  # bytes/s mapping to reward 1.0
    latency_norm_us: float = 10_000.0
    smoothing_alpha: float = 0.5
    smoothed_queue_actuation: bool = False
    feedback_enabled: bool = True
    collector_enabled: bool = True

    def __post_init__(self):
        if self.decision_interval_us <= 0:
            raise ControlError("decision_interval_us must be positive")
        if self.throughput_norm <= 0 or self.latency_norm_us <= 0:
            raise ControlError("normalization constants must be positive")
        if not 0.0 < self.smoothing_alpha <= 1.0:
            raise ControlError("smoothing_alpha must be in (0, 1]")


def compute_reward(prev: MetricsSample | None, cur: MetricsSample, cfg: LoopConfig) -> float:
    """Normalized throughput minus lambda-weighted normalized tail latency.

    Only the current sample enters the formula; the previous one is part of
    the signature for reward shapes that need deltas.  An interval with no
    completions scores -lambda, so stalling is never attractive.
    """
    if cur.completions == 0:
        return -cfg.reward_lambda
    throughput = cur.bytes_transferred / (cur.window_us / 1e6)
    return (throughput / cfg.throughput_norm
            - cfg.reward_lambda * (cur.p99_latency_us / cfg.latency_norm_us))


def smooth_queue_adjust(q_opt: float, q_curr: float, alpha: float) -> float:
    """Damped step alpha * (q_opt - q_curr); callers truncate toward zero
    when applying it to an integer queue depth."""
    return alpha * (q_opt - q_curr)


def perf_total(intensities, config_values, gamma_adj: float, queue_depths) -> float:
    """Sum of W_i * C_i plus gamma_adj times the sum of queue depths.

    gamma_adj is the queue-weighting factor of this score, not the discount
    factor of the learning updates; the two are unrelated despite sharing a
    symbol upstream.
    """
    if len(intensities) != len(config_values):
        raise ControlError("intensities and config_values must have equal length")
    return (sum(w * c for w, c in zip(intensities, config_values))
            + gamma_adj * sum(queue_depths))


def util_eff(p_total: float, disk_op_costs) -> float:
    """p_total relative to the summed disk operation costs."""
    denom = sum(disk_op_costs)
    if denom <= 0:
        raise ControlError("sum of disk op costs must be positive")
    return p_total / denom


def gain(tuned_series, baseline_series, beta: float = 1.0) -> float:
    """Cumulative weighted advantage of a tuned run over a baseline run."""
    tuned = list(tuned_series)
    baseline = list(baseline_series)
    if len(tuned) != len(baseline):
        raise ControlError("series must have equal length")
    return beta * sum(f - b for f, b in zip(tuned, baseline))


@dataclass(frozen=True)
class IntervalRecord:
    """Everything observed and decided in one decision interval."""

    index: int
    metrics: MetricsSample
    features: FeatureVector
    state: object  # discretized id or normalized vector, per agent kind
    action: int
    reward: float
    config: TunableConfig  # knobs in force for the *next* interval


@dataclass
class LoopState:
    """Carry-over between feedback steps within one episode."""

    explore: bool = True
    index: int = 0
    prev_features: FeatureVector | None = None
    prev_metrics: MetricsSample | None = None
    prev_state: object = None
    prev_action: int | None = None
    rewards: list[float] = field(default_factory=list)
    records: list[IntervalRecord] = field(default_factory=list)
    collect_records: bool = True


def _actuate(sim: Simulator, action: int, cfg: LoopConfig) -> TunableConfig:
    proposed = apply_action(sim.config, action)
    if (cfg.smoothed_queue_actuation
            and proposed.queue_depth != sim.config.queue_depth):
        step = smooth_queue_adjust(proposed.queue_depth, sim.config.queue_depth,
                                   cfg.smoothing_alpha)
        depth = sim.config.queue_depth + math.trunc(step)
        proposed = TunableConfig(proposed.readahead_pages, depth, proposed.cache_pages)
    sim.apply_config(proposed)
    return proposed


def feedback_step(sim: Simulator, agent, loop: LoopConfig, state: LoopState,
                  completions, metrics: MetricsSample, terminal: bool = False):
    """One observe/infer/act/reward cycle over an interval's completions.

    Returns (action, reward, next state).  The transition stored with the
    agent pairs this interval's reward with the previous step's action.
    """
    if loop.collector_enabled:
        feats = extract(completions, metrics.window_us, previous=state.prev_features)
    else:
        feats = ZERO_FEATURES
    agent_state = agent.state_of(feats)
    action = agent.act(agent_state, explore=state.explore)
    config = _actuate(sim, action, loop)
    reward = compute_reward(state.prev_metrics, metrics, loop)
    state.rewards.append(reward)
    if loop.feedback_enabled and state.explore and state.prev_action is not None:
        agent.learn(Transition(state.prev_state, state.prev_action, reward,
                               agent_state, terminal=terminal))
    if state.collect_records:
        state.records.append(IntervalRecord(
            state.index, metrics, feats, agent_state, action, reward, config))
    state.index += 1
    state.prev_features = feats
    state.prev_metrics = metrics
    state.prev_state = agent_state
    state.prev_action = action
    return action, reward, agent_state


@dataclass(frozen=True)
class EpisodeResult:
    records: tuple[IntervalRecord, ...]
    final_config: TunableConfig
    duration_us: float
    total_bytes: int
    total_completions: int
    reward_sum: float
    discounted_return: float
    decision_wall_s: float = 0.0

    @property
    def throughput_bytes_per_s(self) -> float:
        if self.duration_us <= 0:
            return 0.0
        return self.total_bytes / (self.duration_us / 1e6)

    def rewards(self) -> list[float]:
        return [r.reward for r in self.records]

    def throughput_series(self) -> list[float]:
        """Per-interval payload throughput in bytes/s."""
        return [r.metrics.bytes_transferred / (r.metrics.window_us / 1e6)
                for r in self.records]


def run_episode(profile: DeviceProfile, initial_config: TunableConfig, trace: Trace,
                agent, loop: LoopConfig = LoopConfig(), *, explore: bool = True,
                return_gamma: float = 0.9, collect_records: bool = True) -> EpisodeResult:
    """Drive one trace through the simulator under the agent's control.

    The interval grid is fixed at loop.decision_interval_us from time zero;
    the episode ends when the simulator has no work left, so a backlogged
    queue extends the episode past the last arrival.  Rewards enter the
    discounted return in interval order.

    explore=True is training mode: epsilon-greedy selection and learning
    updates.  explore=False evaluates the frozen policy greedily; the agent's
    parameters are left untouched.
    """
    sim = Simulator(profile, initial_config)
    sim.offer_trace(trace)
    interval = loop.decision_interval_us
    state = LoopState(explore=explore, collect_records=collect_records)
    total_bytes = 0
    total_completions = 0
    decision_wall = 0.0
    t = 0.0
    while True:
        t_end = t + interval
        completions = sim.advance_to(t_end)
        metrics = summarize(completions, interval, sim.busy_us_between(t, t_end))
        total_bytes += metrics.bytes_transferred
        total_completions += metrics.completions
        last = not sim.pending()
        wall0 = time.perf_counter()
        feedback_step(sim, agent, loop, state, completions, metrics, terminal=last)
        decision_wall += time.perf_counter() - wall0
        t = t_end
        if last:
            break
    return EpisodeResult(
        records=tuple(state.records),
        final_config=sim.config,
        duration_us=t,
        total_bytes=total_bytes,
        total_completions=total_completions,
        reward_sum=sum(state.rewards),
        discounted_return=discounted_return(state.rewards, return_gamma),
        decision_wall_s=decision_wall,
    )
