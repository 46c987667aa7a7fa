from __future__ import annotations

import csv
import io
import json

import pytest

from rlstorage.agent import EpsilonSchedule
from rlstorage.control import LoopConfig
from rlstorage.harness import (
    ABLATION_HEADER,
    FIXTURE_SEEDS,
    METRICS_HEADER,
    SUMMARY_HEADER,
    ExperimentSpec,
    HarnessError,
    ablation_from_dict,
    ablation_to_dict,
    baseline_heuristic,
    baseline_static,
    emit_ablation,
    emit_metrics,
    emit_report,
    fixture_experiment,
    report_from_dict,
    report_to_dict,
    resolve_workload,
    run_ablation,
    run_experiment,
    train_agent,
    weighted_objective,
)
from rlstorage.simenv import TunableConfig


def _tiny_spec(agent_kind="tabular", baseline="static", workload="kv-random",
               train_episodes=2, seeds=(1,), **overrides) -> ExperimentSpec:
    agent_overrides = {"schedule": EpsilonSchedule(1.0, 0.05, 50)}
    agent_overrides.update(overrides.pop("agent_overrides", {}))
    return ExperimentSpec(
        name="tiny",
        device="nvme",
        workload=workload,
        initial_config=TunableConfig(8, 2, 4096),
        agent_kind=agent_kind,
        baseline_kind=baseline,
        loop=LoopConfig(),
        seeds=tuple(seeds),
        train_episodes=train_episodes,
        eval_episodes=1,
        agent_overrides=agent_overrides,
        **overrides,
    )


def test_weighted_objective_is_dot_product():
    assert weighted_objective([1.0, -0.5], [2.0, 0.6]) == pytest.approx(1.7)
    assert weighted_objective([], []) == 0.0
    with pytest.raises(HarnessError):
        weighted_objective([1.0], [1.0, 2.0])


def test_fixture_seeds_are_pinned():
    assert FIXTURE_SEEDS == (1, 2, 3, 4, 5)


def test_resolve_workload_presets():
    for name in ("kv-random", "scan-sequential", "oltp-mixed", "phase-flip"):
        spec = resolve_workload(name)
        trace = spec.build(1)
        assert len(trace.requests) > 0
    with pytest.raises(ValueError):
        resolve_workload("no-such-workload")


def test_workload_builds_are_seed_deterministic():
    spec = resolve_workload("oltp-mixed")
    assert spec.build(3).requests == spec.build(3).requests
    assert spec.build(3).requests != spec.build(4).requests


def test_fixture_experiments_exist():
    for name in ("mixed-sata", "phase-flip", "depth-sweep"):
        spec = fixture_experiment(name)
        assert spec.seeds
    assert fixture_experiment("mixed-sata").device == "sata"
    assert fixture_experiment("depth-sweep").agent_kind == "dqn"
    with pytest.raises(HarnessError):
        fixture_experiment("unknown")


def test_train_agent_runs_requested_episodes():
    result = train_agent(_tiny_spec(train_episodes=3), seed=1)
    assert len(result.episode_reward_sums) == 3
    assert len(result.episode_returns) == 3
    assert result.simulated_us > 0


def test_baselines_run():
    spec = _tiny_spec()
    static = baseline_static(spec, seed=1)
    heur = baseline_heuristic(spec, seed=1)
    assert static.total_completions == heur.total_completions == 10_000


def test_pinned_csv_headers():
    assert METRICS_HEADER == ("experiment,workload,device,policy,seed,interval,"
                              "iops,mean_lat_us,p99_lat_us,hit_rate,utilization,"
                              "reward,readahead,queue_depth,cache_pages")
    assert SUMMARY_HEADER == ("experiment,workload,device,policy,throughput_ratio,"
                              "latency_ratio,gain,objective,c_model,agent_bytes,"
                              "runtime_ms")


def test_run_experiment_matched_pairs():
    report = run_experiment(_tiny_spec())
    assert len(report.policies) == 2
    agent_pol, base_pol = report.policies
    assert agent_pol.policy == "tabular"
    assert base_pol.policy == "static"
    # the baseline is compared against itself: ratios exactly 1, gain 0
    assert base_pol.throughput_ratio == 1.0
    assert base_pol.latency_ratio == 1.0
    assert base_pol.gain == 0.0
    assert agent_pol.agent_bytes == 2282
    assert agent_pol.c_model is None  # tabular has no network


def test_run_experiment_deterministic_csv():
    spec = _tiny_spec()
    a = emit_report(run_experiment(spec), "csv")
    b = emit_report(run_experiment(spec), "csv")
    assert a == b
    am = emit_metrics(run_experiment(spec))
    bm = emit_metrics(run_experiment(spec))
    assert am == bm


def test_none_agent_matches_static_baseline():
    report = run_experiment(_tiny_spec(agent_kind="none"))
    pol = report.policies[0]
    assert pol.throughput_ratio == 1.0
    assert pol.latency_ratio == 1.0


def test_summary_csv_roundtrips_through_parser():
    report = run_experiment(_tiny_spec())
    text = emit_report(report, "csv").decode("utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == SUMMARY_HEADER.split(",")
    assert len(rows) == 3  # header + one row per policy
    for row in rows[1:]:
        assert len(row) == len(rows[0])
        assert row[0] == "tiny"


def test_metrics_csv_shape():
    report = run_experiment(_tiny_spec())
    text = emit_metrics(report).decode("utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == METRICS_HEADER.split(",")
    interval_count = sum(len(s.intervals) for p in report.policies for s in p.seeds)
    assert len(rows) == 1 + interval_count


def test_text_report_lists_each_policy():
    report = run_experiment(_tiny_spec())
    text = emit_report(report, "text").decode("utf-8")
    assert "tabular" in text
    assert "static" in text
    assert "proxy" in text  # overhead is labeled as a proxy measure


def test_plotdata_series_lengths():
    report = run_experiment(_tiny_spec())
    text = emit_report(report, "plotdata").decode("utf-8")
    lengths: dict[tuple, dict[str, int]] = {}
    key = metric = None
    for line in text.splitlines():
        if line.startswith("# series"):
            fields = dict(tok.split("=", 1) for tok in line.split()[2:])
            key = (fields["policy"], fields["seed"])
            metric = fields["metric"]
            lengths.setdefault(key, {})[metric] = 0
        elif line.strip():
            lengths[key][metric] += 1
    assert lengths  # at least one series emitted
    for key, by_metric in lengths.items():
        interval_counts = set(by_metric.values())
        assert len(interval_counts) == 1, f"{key}: unequal series {by_metric}"
        # series length equals the number of recorded intervals for that seed
        policy = next(p for p in report.policies if p.policy == key[0])
        seed_row = next(s for s in policy.seeds if str(s.seed) == key[1])
        assert interval_counts.pop() == len(seed_row.intervals)


def test_emit_report_rejects_unknown_format():
    report = run_experiment(_tiny_spec())
    with pytest.raises(HarnessError):
        emit_report(report, "pdf")


def test_report_dict_roundtrip():
    report = run_experiment(_tiny_spec())
    as_dict = report_to_dict(report)
    assert as_dict["kind"] == "experiment"
    again = report_from_dict(json.loads(json.dumps(as_dict)))
    assert emit_report(again, "csv") == emit_report(report, "csv")
    assert emit_metrics(again) == emit_metrics(report)


def test_components_ablation_rows():
    spec = _tiny_spec(workload="phase-flip")
    report = run_ablation(spec, mode="components")
    labels = [r.label for r in report.rows]
    assert labels == ["full", "feedback-off", "collector-off", "both-off"]
    ref = report.rows[0]
    assert ref.delta_vs_reference_pct == 0.0
    assert ref.gain_vs_reference == 0.0
    for row in report.rows:
        assert len(row.per_seed_throughput) == len(spec.seeds)


def test_depth_ablation_reports_c_model():
    spec = _tiny_spec(agent_kind="dqn", workload="phase-flip", train_episodes=1)
    report = run_ablation(spec, mode="depths", depths=(3, 4))
    assert [r.label for r in report.rows] == ["depth-3", "depth-4"]
    assert [r.c_model for r in report.rows] == [3 * 49, 4 * 49]


def test_ablation_csv_and_dict_roundtrip():
    spec = _tiny_spec(workload="phase-flip")
    report = run_ablation(spec, mode="components")
    text = emit_ablation(report, "csv").decode("utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ABLATION_HEADER.split(",")
    assert len(rows) == 1 + len(report.rows)
    again = ablation_from_dict(json.loads(json.dumps(ablation_to_dict(report))))
    assert emit_ablation(again, "csv") == emit_ablation(report, "csv")


def test_run_ablation_rejects_unknown_mode():
    with pytest.raises(HarnessError):
        run_ablation(_tiny_spec(), mode="sideways")
