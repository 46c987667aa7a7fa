"""Experiment orchestration: RL-vs-baseline runs, ablations, and reports.

An experiment trains one agent per seed on a named workload, evaluates it
greedily on fresh traces, runs the matched baseline on byte-identical
traces, and folds everything into a Report.  Every ratio in a report is a
matched pair: same workload generator, same seeds, same decision grid, the
only difference being who moves the knobs.

Reported runtime_ms is *simulated* time, so repeated runs of the same spec
produce byte-identical CSV; wall-clock cost appears in the text report as
the decision-loop overhead proxy (wall seconds spent in collect/infer/learn
divided by simulated seconds).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, replace

from . import neuralnet
from .agent import (
    ACTION_NOOP,
    ACTION_READAHEAD_DOWN,
    ACTION_READAHEAD_UP,
    StaticAgent,
    make_agent,
    save_agent,
)
from .config import Config, default_config
from .control import EpisodeResult, LoopConfig, gain, run_episode
from .features import FeatureVector
from .simenv import DeviceProfile, TunableConfig
from .trace import (
    DEFAULT_REFERENCE_THROUGHPUT,
    PhaseSpec,
    Trace,
    gen_phased,
    gen_random,
    gen_sequential,
    load_trace,
)

FIXTURE_SEEDS = (1, 2, 3, 4, 5)

# rng stream tags so trace, agent, and any future draws never collide
_STREAM_TRAIN_TRACE = 17
_STREAM_EVAL_TRACE = 19
_STREAM_AGENT = 13


class HarnessError(ValueError):
    pass


def weighted_objective(weights, contributions) -> float:
    """Dot product of weights and metric contributions."""
    weights = list(weights)
    contributions = list(contributions)
    if len(weights) != len(contributions):
        raise HarnessError("weights and contributions must have equal length")
    return sum(w * x for w, x in zip(weights, contributions))


# -- workloads ---------------------------------------------------------------

@dataclass(frozen=True)
class WorkloadSpec:
    """Resolved generator parameters (or a trace path) for one workload."""

    name: str
    kind: str  # random | sequential | phased | trace
    block_size: int = 4096
    count: int = 10000
    read_fraction: float = 1.0
    inter_arrival_us: float = 100.0
    address_space: int | None = None
    start_offset: int = 0
    phases: tuple[PhaseSpec, ...] = ()
    reference_throughput: float = DEFAULT_REFERENCE_THROUGHPUT
    path: str | None = None

    def build(self, seed) -> Trace:
        if self.kind == "random":
            return gen_random(self.address_space or (1 << 29), self.count,
                              self.block_size, self.read_fraction,
                              self.inter_arrival_us, seed)
        if self.kind == "sequential":
            return gen_sequential(self.start_offset, self.count, self.block_size,
                                  self.inter_arrival_us,
                                  address_space=self.address_space)
        if self.kind == "phased":
            return gen_phased(self.phases, seed,
                              address_space=self.address_space or (1 << 30),
                              reference_throughput=self.reference_throughput)
        if self.kind == "trace":
            return load_trace(self.path)
        raise HarnessError(f"unknown workload kind {self.kind!r}")


def resolve_workload(name: str, settings: Config | None = None) -> WorkloadSpec:
    """Look a workload preset up in the configuration."""
    settings = settings or default_config()
    params = settings.workload_params(name)
    kind = params.get("pattern")
    if kind is None:
        raise HarnessError(f"workload {name!r} has no pattern setting")
    ref = settings.get_float("harness.reference_throughput")
    if kind == "random":
        return WorkloadSpec(
            name=name, kind="random",
            block_size=settings.get_int(f"workload.{name}.block_size"),
            count=settings.get_int(f"workload.{name}.count"),
            read_fraction=settings.get_float(f"workload.{name}.read_fraction"),
            inter_arrival_us=settings.get_float(f"workload.{name}.inter_arrival_us"),
            address_space=settings.get_int(f"workload.{name}.address_space"),
            reference_throughput=ref,
        )
    if kind == "sequential":
        return WorkloadSpec(
            name=name, kind="sequential",
            block_size=settings.get_int(f"workload.{name}.block_size"),
            count=settings.get_int(f"workload.{name}.count"),
            inter_arrival_us=settings.get_float(f"workload.{name}.inter_arrival_us"),
            start_offset=settings.get_int(f"workload.{name}.start_offset"),
            reference_throughput=ref,
        )
    if kind == "phased":
        return WorkloadSpec(
            name=name, kind="phased",
            phases=tuple(settings.workload_phases(name)),
            address_space=settings.get_int(f"workload.{name}.address_space"),
            reference_throughput=ref,
        )
    if kind == "trace":
        return WorkloadSpec(name=name, kind="trace",
                            path=settings.get_str(f"workload.{name}.path"))
    raise HarnessError(f"workload {name!r} has unknown pattern {kind!r}")


# -- experiment specification ------------------------------------------------

@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    device: str
    workload: str | WorkloadSpec
    initial_config: TunableConfig = TunableConfig()
    agent_kind: str = "tabular"
    baseline_kind: str = "static"
    loop: LoopConfig = LoopConfig()
    seeds: tuple[int, ...] = FIXTURE_SEEDS
    train_episodes: int = 30
    eval_episodes: int = 1
    agent_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.seeds:
            raise HarnessError("seeds must be non-empty")
        if self.train_episodes < 0:
            raise HarnessError("train_episodes must be >= 0")
        if self.eval_episodes < 1:
            raise HarnessError("eval_episodes must be >= 1")
        if self.agent_kind not in ("tabular", "dqn", "none"):
            raise HarnessError(f"unknown agent kind {self.agent_kind!r}")
        if self.baseline_kind not in ("static", "heuristic"):
            raise HarnessError(f"unknown baseline kind {self.baseline_kind!r}")


class HeuristicAgent:
    """Rule-based comparator: chase sequentiality with readahead, leave the
    queue and cache alone."""

    kind = "heuristic"

    def state_of(self, vector: FeatureVector) -> FeatureVector:
        return vector

    def act(self, state: FeatureVector, explore: bool = True) -> int:
        if state.sequentiality > 0.8:
            return ACTION_READAHEAD_UP
        if state.sequentiality < 0.2:
            return ACTION_READAHEAD_DOWN
        return ACTION_NOOP

    def learn(self, transition):
        return None


def _baseline_agent(kind: str):
    return StaticAgent() if kind == "static" else HeuristicAgent()


def _resolve(spec: ExperimentSpec, settings: Config):
    workload = spec.workload
    if isinstance(workload, str):
        workload = resolve_workload(workload, settings)
    profile = settings.device_profile(spec.device)
    return workload, profile


def _build_agent(spec: ExperimentSpec, settings: Config, seed: int):
    kwargs = settings.agent_kwargs()
    kwargs.update(spec.agent_overrides)
    return make_agent(spec.agent_kind, seed=(seed, _STREAM_AGENT), **kwargs)


# -- training and baselines --------------------------------------------------

@dataclass(frozen=True)
class TrainResult:
    agent: object
    episode_reward_sums: tuple[float, ...]
    episode_returns: tuple[float, ...]
    final_config: TunableConfig
    simulated_us: float
    decision_wall_s: float


def train_agent(spec: ExperimentSpec, settings: Config | None = None,
                seed: int | None = None) -> TrainResult:
    """Train one agent on the spec's workload; fresh simulator per episode."""
    settings = settings or default_config()
    seed = spec.seeds[0] if seed is None else seed
    workload, profile = _resolve(spec, settings)
    agent = _build_agent(spec, settings, seed)
    gamma = spec.agent_overrides.get("gamma", settings.get_float("agent.gamma"))
    sums, returns = [], []
    simulated = 0.0
    wall = 0.0
    final = spec.initial_config
    for episode in range(spec.train_episodes):
        trace = workload.build((seed, _STREAM_TRAIN_TRACE, episode))
        result = run_episode(profile, spec.initial_config, trace, agent, spec.loop,
                             explore=True, return_gamma=gamma, collect_records=False)
        sums.append(result.reward_sum)
        returns.append(result.discounted_return)
        simulated += result.duration_us
        wall += result.decision_wall_s
        final = result.final_config
    return TrainResult(agent, tuple(sums), tuple(returns), final, simulated, wall)


def baseline_static(spec: ExperimentSpec, settings: Config | None = None,
                    seed: int | None = None, trace: Trace | None = None) -> EpisodeResult:
    """The no-tuning comparator: initial config held for the whole episode."""
    settings = settings or default_config()
    seed = spec.seeds[0] if seed is None else seed
    workload, profile = _resolve(spec, settings)
    if trace is None:
        trace = workload.build((seed, _STREAM_EVAL_TRACE, 0))
    return run_episode(profile, spec.initial_config, trace, StaticAgent(), spec.loop,
                       explore=False)


def baseline_heuristic(spec: ExperimentSpec, settings: Config | None = None,
                       seed: int | None = None, trace: Trace | None = None) -> EpisodeResult:
    """The rule-based comparator (readahead follows sequentiality)."""
    settings = settings or default_config()
    seed = spec.seeds[0] if seed is None else seed
    workload, profile = _resolve(spec, settings)
    if trace is None:
        trace = workload.build((seed, _STREAM_EVAL_TRACE, 0))
    return run_episode(profile, spec.initial_config, trace, HeuristicAgent(), spec.loop,
                       explore=False)


# -- reports -----------------------------------------------------------------

@dataclass(frozen=True)
class IntervalRow:
    interval: int
    iops: float
    mean_lat_us: float | None
    p99_lat_us: float | None
    hit_rate: float | None
    utilization: float
    reward: float
    readahead: int
    queue_depth: int
    cache_pages: int
    throughput_bps: float


@dataclass(frozen=True)
class SeedResult:
    seed: int
    throughput_bps: float
    mean_p99_us: float | None
    reward_sum: float
    discounted_return: float
    throughput_ratio: float | None
    latency_ratio: float | None
    gain: float | None
    intervals: tuple[IntervalRow, ...]


@dataclass(frozen=True)
class PolicyResult:
    policy: str
    seeds: tuple[SeedResult, ...]
    throughput_ratio: float | None
    latency_ratio: float | None
    gain: float | None
    objective: float | None
    c_model: int | None
    agent_bytes: int | None
    runtime_ms: float
    decision_overhead: float


@dataclass(frozen=True)
class Report:
    experiment: str
    workload: str
    device: str
    policies: tuple[PolicyResult, ...]


def _interval_rows(episodes) -> tuple[IntervalRow, ...]:
    rows = []
    counter = 0
    for ep in episodes:
        for rec in ep.records:
            m = rec.metrics
            rows.append(IntervalRow(
                interval=counter,
                iops=m.iops,
                mean_lat_us=m.mean_latency_us,
                p99_lat_us=m.p99_latency_us,
                hit_rate=m.cache_hit_rate,
                utilization=m.utilization,
                reward=rec.reward,
                readahead=rec.config.readahead_pages,
                queue_depth=rec.config.queue_depth,
                cache_pages=rec.config.cache_pages,
                throughput_bps=m.bytes_transferred / (m.window_us / 1e6),
            ))
            counter += 1
    return tuple(rows)


def _throughput(episodes) -> float:
    total_bytes = sum(ep.total_bytes for ep in episodes)
    total_us = sum(ep.duration_us for ep in episodes)
    return total_bytes / (total_us / 1e6) if total_us > 0 else 0.0


def _mean_p99(episodes) -> float | None:
    vals = [r.metrics.p99_latency_us for ep in episodes for r in ep.records
            if r.metrics.p99_latency_us is not None]
    return sum(vals) / len(vals) if vals else None


def _paired_gain(policy_eps, baseline_eps, beta: float) -> float:
    """Sum of per-episode gains over the interval prefix both runs cover."""
    total = 0.0
    for pol, base in zip(policy_eps, baseline_eps):
        f = pol.throughput_series()
        b = base.throughput_series()
        n = min(len(f), len(b))
        total += gain(f[:n], b[:n], beta)
    return total


def _seed_outcome(seed, episodes, baseline_eps, beta) -> SeedResult:
    tput = _throughput(episodes)
    p99 = _mean_p99(episodes)
    ratio = lat_ratio = g = None
    if baseline_eps is not None:
        base_tput = _throughput(baseline_eps)
        base_p99 = _mean_p99(baseline_eps)
        ratio = tput / base_tput if base_tput > 0 else None
        lat_ratio = (p99 / base_p99
                     if p99 is not None and base_p99 is not None and base_p99 > 0
                     else None)
        g = _paired_gain(episodes, baseline_eps, beta)
    return SeedResult(
        seed=seed,
        throughput_bps=tput,
        mean_p99_us=p99,
        reward_sum=sum(ep.reward_sum for ep in episodes),
        discounted_return=sum(ep.discounted_return for ep in episodes),
        throughput_ratio=ratio,
        latency_ratio=lat_ratio,
        gain=g,
        intervals=_interval_rows(episodes),
    )


def _mean_of(values) -> float | None:
    vals = [v for v in values if v is not None]
    return sum(vals) / len(vals) if vals else None


def _policy_result(policy, seed_results, *, objective_weights, c_model, agent_bytes,
                   simulated_us, decision_wall_s) -> PolicyResult:
    ratio = _mean_of([s.throughput_ratio for s in seed_results])
    lat = _mean_of([s.latency_ratio for s in seed_results])
    g = _mean_of([s.gain for s in seed_results])
    objective = None
    if ratio is not None and lat is not None:
        objective = weighted_objective(objective_weights, [ratio, lat])
    return PolicyResult(
        policy=policy,
        seeds=tuple(seed_results),
        throughput_ratio=ratio,
        latency_ratio=lat,
        gain=g,
        objective=objective,
        c_model=c_model,
        agent_bytes=agent_bytes,
        runtime_ms=simulated_us / 1e3,
        decision_overhead=(decision_wall_s / (simulated_us / 1e6)
                           if simulated_us > 0 else 0.0),
    )


def run_experiment(spec: ExperimentSpec, settings: Config | None = None) -> Report:
    """Train, evaluate, run matched baselines, and aggregate into a Report."""
    settings = settings or default_config()
    workload, profile = _resolve(spec, settings)
    beta = settings.get_float("harness.gain_beta")
    weights = settings.get_floats("harness.objective_weights")
    gamma = spec.agent_overrides.get("gamma", settings.get_float("agent.gamma"))

    agent_seed_rows = []
    base_seed_rows = []
    agent_sim_us = base_sim_us = 0.0
    agent_wall = base_wall = 0.0
    agent_bytes = None
    c_model = None
    for seed in spec.seeds:
        trained = train_agent(spec, settings, seed)
        agent = trained.agent
        agent_sim_us += trained.simulated_us
        agent_wall += trained.decision_wall_s
        eval_traces = [workload.build((seed, _STREAM_EVAL_TRACE, j))
                       for j in range(spec.eval_episodes)]
        eval_eps = []
        for trace in eval_traces:
            ep = run_episode(profile, spec.initial_config, trace, agent, spec.loop,
                             explore=False, return_gamma=gamma)
            eval_eps.append(ep)
            agent_sim_us += ep.duration_us
            agent_wall += ep.decision_wall_s
        base_eps = []
        for trace in eval_traces:
            ep = run_episode(profile, spec.initial_config, trace,
                             _baseline_agent(spec.baseline_kind), spec.loop,
                             explore=False, return_gamma=gamma)
            base_eps.append(ep)
            base_sim_us += ep.duration_us
            base_wall += ep.decision_wall_s
        agent_seed_rows.append(_seed_outcome(seed, eval_eps, base_eps, beta))
        base_seed_rows.append(_seed_outcome(seed, base_eps, base_eps, beta))
        if agent.kind in ("tabular", "dqn") and agent_bytes is None:
            agent_bytes = len(save_agent(agent))
        if agent.kind == "dqn" and c_model is None:
            c_model = neuralnet.complexity(agent.online)

    policies = (
        _policy_result(spec.agent_kind, agent_seed_rows, objective_weights=weights,
                       c_model=c_model, agent_bytes=agent_bytes,
                       simulated_us=agent_sim_us, decision_wall_s=agent_wall),
        _policy_result(spec.baseline_kind, base_seed_rows, objective_weights=weights,
                       c_model=None, agent_bytes=None,
                       simulated_us=base_sim_us, decision_wall_s=base_wall),
    )
    return Report(spec.name, workload.name, spec.device, policies)


# -- ablations ---------------------------------------------------------------

@dataclass(frozen=True)
class AblationRow:
    label: str
    per_seed_throughput: tuple[tuple[int, float], ...]
    per_seed_gain_vs_reference: tuple[tuple[int, float], ...]
    throughput_bps: float
    delta_vs_reference_pct: float
    gain_vs_reference: float
    c_model: int | None
    runtime_ms: float


@dataclass(frozen=True)
class AblationReport:
    experiment: str
    workload: str
    device: str
    mode: str  # components | depths
    rows: tuple[AblationRow, ...]  # rows[0] is the reference variant


_COMPONENT_VARIANTS = (
    ("full", dict(feedback_enabled=True, collector_enabled=True)),
    ("feedback-off", dict(feedback_enabled=False, collector_enabled=True)),
    ("collector-off", dict(feedback_enabled=True, collector_enabled=False)),
    ("both-off", dict(feedback_enabled=False, collector_enabled=False)),
)


def _run_variant(spec: ExperimentSpec, settings: Config):
    """Train+evaluate one configuration; returns per-seed eval episodes."""
    workload, profile = _resolve(spec, settings)
    gamma = spec.agent_overrides.get("gamma", settings.get_float("agent.gamma"))
    per_seed = {}
    simulated = 0.0
    sample_agent = None
    for seed in spec.seeds:
        trained = train_agent(spec, settings, seed)
        simulated += trained.simulated_us
        eval_eps = []
        for j in range(spec.eval_episodes):
            trace = workload.build((seed, _STREAM_EVAL_TRACE, j))
            ep = run_episode(profile, spec.initial_config, trace, trained.agent,
                             spec.loop, explore=False, return_gamma=gamma)
            eval_eps.append(ep)
            simulated += ep.duration_us
        per_seed[seed] = eval_eps
        sample_agent = trained.agent
    return per_seed, simulated, sample_agent


def run_ablation(spec: ExperimentSpec, settings: Config | None = None, *,
                 mode: str = "components", depths=(3, 4, 5)) -> AblationReport:
    """Component switches (feedback/collector) or DQN depth sweep.

    Every variant trains from scratch on identical seeds and evaluates on
    identical traces; rows[0] is the reference the deltas and gains are
    computed against (the full loop, or the first depth).
    """
    settings = settings or default_config()
    if spec.agent_kind not in ("tabular", "dqn"):
        raise HarnessError("ablation requires a learning agent kind")
    if mode == "components":
        variants = [(label, replace(spec, loop=replace(spec.loop, **flags)))
                    for label, flags in _COMPONENT_VARIANTS]
    elif mode == "depths":
        if spec.agent_kind != "dqn":
            raise HarnessError("depth ablation requires the dqn agent kind")
        variants = []
        for depth in depths:
            overrides = dict(spec.agent_overrides)
            overrides["depth"] = depth
            variants.append((f"depth-{depth}", replace(spec, agent_overrides=overrides)))
    else:
        raise HarnessError(f"unknown ablation mode {mode!r}")

    beta = settings.get_float("harness.gain_beta")
    runs = []
    for label, variant_spec in variants:
        per_seed, simulated, sample_agent = _run_variant(variant_spec, settings)
        c_model = (neuralnet.complexity(sample_agent.online)
                   if getattr(sample_agent, "kind", None) == "dqn" else None)
        runs.append((label, per_seed, simulated, c_model))

    _, ref_per_seed, _, _ = runs[0]
    ref_tput = _mean_of([_throughput(eps) for eps in ref_per_seed.values()])
    rows = []
    for label, per_seed, simulated, c_model in runs:
        tputs = [(seed, _throughput(eps)) for seed, eps in per_seed.items()]
        gains = [(seed, _paired_gain(ref_per_seed[seed], per_seed[seed], beta))
                 for seed in per_seed]
        mean_tput = _mean_of([t for _, t in tputs]) or 0.0
        rows.append(AblationRow(
            label=label,
            per_seed_throughput=tuple(tputs),
            per_seed_gain_vs_reference=tuple(gains),
            throughput_bps=mean_tput,
            delta_vs_reference_pct=((mean_tput - ref_tput) / ref_tput * 100.0
                                    if ref_tput else 0.0),
            gain_vs_reference=_mean_of([g for _, g in gains]) or 0.0,
            c_model=c_model,
            runtime_ms=simulated / 1e3,
        ))
    workload, _ = _resolve(spec, settings)
    return AblationReport(spec.name, workload.name, spec.device, mode, tuple(rows))


# -- fixtures ----------------------------------------------------------------

def fixture_experiment(name: str) -> ExperimentSpec:
    """Pinned experiment definitions used by the bundled benchmark suite."""
    from .agent import EpsilonSchedule

    if name == "mixed-sata":
        return ExperimentSpec(
            name="mixed-sata",
            device="sata",
            workload="oltp-mixed",
            initial_config=TunableConfig(readahead_pages=8, queue_depth=2,
                                         cache_pages=4096),
            agent_kind="tabular",
            baseline_kind="static",
            loop=LoopConfig(latency_norm_us=100_000.0),
            seeds=FIXTURE_SEEDS,
            train_episodes=30,
            eval_episodes=1,
            agent_overrides=dict(schedule=EpsilonSchedule(1.0, 0.05, 1200)),
        )
    if name == "phase-flip":
        return ExperimentSpec(
            name="phase-flip",
            device="sata",
            workload="phase-flip",
            initial_config=TunableConfig(readahead_pages=8, queue_depth=2,
                                         cache_pages=4096),
            agent_kind="tabular",
            baseline_kind="static",
            loop=LoopConfig(latency_norm_us=100_000.0),
            seeds=FIXTURE_SEEDS,
            train_episodes=30,
            eval_episodes=1,
            agent_overrides=dict(schedule=EpsilonSchedule(1.0, 0.05, 1200)),
        )
    if name == "depth-sweep":
        return ExperimentSpec(
            name="depth-sweep",
            device="sata",
            workload="phase-flip",
            initial_config=TunableConfig(readahead_pages=8, queue_depth=2,
                                         cache_pages=4096),
            agent_kind="dqn",
            baseline_kind="static",
            loop=LoopConfig(latency_norm_us=100_000.0),
            seeds=(1, 2),
            train_episodes=8,
            eval_episodes=1,
            agent_overrides=dict(schedule=EpsilonSchedule(1.0, 0.05, 400)),
        )
    raise HarnessError(f"unknown fixture experiment {name!r}")


# -- emission ----------------------------------------------------------------

METRICS_HEADER = ("experiment,workload,device,policy,seed,interval,iops,"
                  "mean_lat_us,p99_lat_us,hit_rate,utilization,reward,"
                  "readahead,queue_depth,cache_pages")
SUMMARY_HEADER = ("experiment,workload,device,policy,throughput_ratio,"
                  "latency_ratio,gain,objective,c_model,agent_bytes,runtime_ms")
ABLATION_HEADER = ("experiment,workload,device,mode,variant,throughput_bps,"
                   "delta_vs_reference_pct,gain_vs_reference,c_model,runtime_ms")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    return format(float(value), ".10g")


def emit_metrics(report: Report) -> bytes:
    """Per-interval CSV across all policies and seeds."""
    lines = [METRICS_HEADER]
    for policy in report.policies:
        for seed_result in policy.seeds:
            for row in seed_result.intervals:
                lines.append(",".join([
                    report.experiment, report.workload, report.device,
                    policy.policy, str(seed_result.seed), str(row.interval),
                    _fmt(row.iops), _fmt(row.mean_lat_us), _fmt(row.p99_lat_us),
                    _fmt(row.hit_rate), _fmt(row.utilization), _fmt(row.reward),
                    str(row.readahead), str(row.queue_depth), str(row.cache_pages),
                ]))
    return ("\n".join(lines) + "\n").encode("utf-8")


def _summary_csv(report: Report) -> str:
    lines = [SUMMARY_HEADER]
    for policy in report.policies:
        lines.append(",".join([
            report.experiment, report.workload, report.device, policy.policy,
            _fmt(policy.throughput_ratio), _fmt(policy.latency_ratio),
            _fmt(policy.gain), _fmt(policy.objective), _fmt(policy.c_model),
            _fmt(policy.agent_bytes), _fmt(policy.runtime_ms),
        ]))
    return "\n".join(lines) + "\n"


def _summary_text(report: Report) -> str:
    out = [f"experiment {report.experiment}  workload {report.workload}  "
           f"device {report.device}"]
    header = (f"{'policy':<12} {'tput_ratio':>10} {'lat_ratio':>10} {'gain':>14} "
              f"{'objective':>10} {'c_model':>8} {'bytes':>8} {'sim_ms':>10} "
              f"{'overhead':>9}")
    out.append(header)
    out.append("-" * len(header))
    for policy in report.policies:
        out.append(
            f"{policy.policy:<12} "
            f"{_fmt(policy.throughput_ratio) or '-':>10} "
            f"{_fmt(policy.latency_ratio) or '-':>10} "
            f"{_fmt(policy.gain) or '-':>14} "
            f"{_fmt(policy.objective) or '-':>10} "
            f"{_fmt(policy.c_model) or '-':>8} "
            f"{_fmt(policy.agent_bytes) or '-':>8} "
            f"{_fmt(policy.runtime_ms):>10} "
            f"{policy.decision_overhead * 100.0:>8.3f}%"
        )
        for s in policy.seeds:
            out.append(f"  seed {s.seed}: throughput {s.throughput_bps / 1e6:.2f} MB/s"
                       + (f", ratio {s.throughput_ratio:.3f}"
                          if s.throughput_ratio is not None else "")
                       + (f", p99 {s.mean_p99_us:.0f} us"
                          if s.mean_p99_us is not None else ""))
    out.append("overhead = decision-loop wall time / simulated time "
               "(proxy for tuner CPU cost; not a hardware measurement)")
    return "\n".join(out) + "\n"


def _plotdata(report: Report) -> str:
    """Named x/y series, one point per line, blank line between series."""
    blocks = []
    for policy in report.policies:
        for seed_result in policy.seeds:
            for metric in ("throughput_bps", "reward", "queue_depth", "readahead"):
                lines = [f"# series experiment={report.experiment} "
                         f"policy={policy.policy} seed={seed_result.seed} "
                         f"metric={metric}"]
                for row in seed_result.intervals:
                    lines.append(f"{row.interval} {_fmt(getattr(row, metric))}")
                blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def emit_report(report: Report, fmt: str = "csv") -> bytes:
    if fmt == "csv":
        return _summary_csv(report).encode("utf-8")
    if fmt == "text":
        return _summary_text(report).encode("utf-8")
    if fmt == "plotdata":
        return _plotdata(report).encode("utf-8")
    raise HarnessError(f"unknown report format {fmt!r}")


def emit_ablation(report: AblationReport, fmt: str = "csv") -> bytes:
    if fmt == "csv":
        lines = [ABLATION_HEADER]
        for row in report.rows:
            lines.append(",".join([
                report.experiment, report.workload, report.device, report.mode,
                row.label, _fmt(row.throughput_bps), _fmt(row.delta_vs_reference_pct),
                _fmt(row.gain_vs_reference), _fmt(row.c_model), _fmt(row.runtime_ms),
            ]))
        return ("\n".join(lines) + "\n").encode("utf-8")
    if fmt == "text":
        out = [f"ablation {report.experiment} ({report.mode})  "
               f"workload {report.workload}  device {report.device}"]
        header = (f"{'variant':<14} {'tput MB/s':>10} {'delta%':>8} "
                  f"{'gain_vs_ref':>14} {'c_model':>8}")
        out.append(header)
        out.append("-" * len(header))
        for row in report.rows:
            out.append(f"{row.label:<14} {row.throughput_bps / 1e6:>10.2f} "
                       f"{row.delta_vs_reference_pct:>8.2f} "
                       f"{_fmt(row.gain_vs_reference):>14} "
                       f"{_fmt(row.c_model) or '-':>8}")
        return ("\n".join(out) + "\n").encode("utf-8")
    if fmt == "plotdata":
        lines = [f"# series experiment={report.experiment} mode={report.mode} "
                 f"metric=throughput_bps"]
        for i, row in enumerate(report.rows):
            lines.append(f"{i} {_fmt(row.throughput_bps)} # {row.label}")
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise HarnessError(f"unknown report format {fmt!r}")


# -- JSON codecs -------------------------------------------------------------

def report_to_dict(report: Report) -> dict:
    return {
        "kind": "experiment",
        "experiment": report.experiment,
        "workload": report.workload,
        "device": report.device,
        "policies": [
            {
                "policy": p.policy,
                "throughput_ratio": p.throughput_ratio,
                "latency_ratio": p.latency_ratio,
                "gain": p.gain,
                "objective": p.objective,
                "c_model": p.c_model,
                "agent_bytes": p.agent_bytes,
                "runtime_ms": p.runtime_ms,
                "decision_overhead": p.decision_overhead,
                "seeds": [
                    {
                        "seed": s.seed,
                        "throughput_bps": s.throughput_bps,
                        "mean_p99_us": s.mean_p99_us,
                        "reward_sum": s.reward_sum,
                        "discounted_return": s.discounted_return,
                        "throughput_ratio": s.throughput_ratio,
                        "latency_ratio": s.latency_ratio,
                        "gain": s.gain,
                        "intervals": [dataclasses.asdict(row) for row in s.intervals],
                    }
                    for s in p.seeds
                ],
            }
            for p in report.policies
        ],
    }


def report_from_dict(data: dict) -> Report:
    if data.get("kind") != "experiment":
        raise HarnessError("not an experiment report")
    policies = []
    for p in data["policies"]:
        seeds = []
        for s in p["seeds"]:
            rows = tuple(IntervalRow(**row) for row in s["intervals"])
            seeds.append(SeedResult(
                seed=s["seed"], throughput_bps=s["throughput_bps"],
                mean_p99_us=s["mean_p99_us"], reward_sum=s["reward_sum"],
                discounted_return=s["discounted_return"],
                throughput_ratio=s["throughput_ratio"],
                latency_ratio=s["latency_ratio"], gain=s["gain"], intervals=rows))
        policies.append(PolicyResult(
            policy=p["policy"], seeds=tuple(seeds),
            throughput_ratio=p["throughput_ratio"], latency_ratio=p["latency_ratio"],
            gain=p["gain"], objective=p["objective"], c_model=p["c_model"],
            agent_bytes=p["agent_bytes"], runtime_ms=p["runtime_ms"],
            decision_overhead=p["decision_overhead"]))
    return Report(data["experiment"], data["workload"], data["device"], tuple(policies))


def ablation_to_dict(report: AblationReport) -> dict:
    return {
        "kind": "ablation",
        "experiment": report.experiment,
        "workload": report.workload,
        "device": report.device,
        "mode": report.mode,
        "rows": [
            {
                "label": r.label,
                "per_seed_throughput": [list(pair) for pair in r.per_seed_throughput],
                "per_seed_gain_vs_reference": [list(pair) for pair in r.per_seed_gain_vs_reference],
                "throughput_bps": r.throughput_bps,
                "delta_vs_reference_pct": r.delta_vs_reference_pct,
                "gain_vs_reference": r.gain_vs_reference,
                "c_model": r.c_model,
                "runtime_ms": r.runtime_ms,
            }
            for r in report.rows
        ],
    }


def ablation_from_dict(data: dict) -> AblationReport:
    if data.get("kind") != "ablation":
        raise HarnessError("not an ablation report")
    rows = tuple(AblationRow(
        label=r["label"],
        per_seed_throughput=tuple((int(s), float(t)) for s, t in r["per_seed_throughput"]),
        per_seed_gain_vs_reference=tuple((int(s), float(g))
                                         for s, g in r["per_seed_gain_vs_reference"]),
        throughput_bps=r["throughput_bps"],
        delta_vs_reference_pct=r["delta_vs_reference_pct"],
        gain_vs_reference=r["gain_vs_reference"],
        c_model=r["c_model"],
        runtime_ms=r["runtime_ms"],
    ) for r in data["rows"])
    return AblationReport(data["experiment"], data["workload"], data["device"],
                          data["mode"], rows)
