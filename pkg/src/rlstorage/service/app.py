"""FastAPI application wrapping the simulator, trainer, and harness.

Synchronous endpoints cover trace generation and single simulations; the
experiment, ablation, and training endpoints enqueue background jobs and
expose results as a canonical report dict plus rendered artifacts (summary
CSV, per-interval metrics CSV, text table, plot series).
"""

from __future__ import annotations

import base64
import dataclasses

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import PlainTextResponse

from .. import __version__, harness, simenv
from ..agent import save_agent
from ..config import DEFAULT_TEXT, Config, ConfigError, default_config, parse_config
from ..trace import TraceError, read_trace, write_trace
from . import models
from .jobs import JobManager


def _settings_for(base: Config, config_text: str | None) -> Config:
    if config_text is None:
        return base
    merged = dict(base.values)
    merged.update(parse_config(config_text).values)
    return Config(merged)


def _experiment_spec(req: models.ExperimentRequest, settings: Config) -> harness.ExperimentSpec:
    if req.fixture is not None:
        spec = harness.fixture_experiment(req.fixture)
        if req.seeds != [1, 2, 3, 4, 5]:
            spec = dataclasses.replace(spec, seeds=tuple(req.seeds))
        return spec
    knobs = req.knobs or models.TunableKnobs(**{
        "readahead_pages": settings.get_int("tunable.readahead_pages"),
        "queue_depth": settings.get_int("tunable.queue_depth"),
        "cache_pages": settings.get_int("tunable.cache_pages"),
    })
    loop_overrides = req.loop.as_kwargs() if req.loop else {}
    agent_overrides = {}
    if req.epsilon_decay_steps is not None:
        from ..agent import EpsilonSchedule

        agent_overrides["schedule"] = EpsilonSchedule(
            start=settings.get_float("agent.epsilon_start"),
            end=settings.get_float("agent.epsilon_end"),
            decay_steps=req.epsilon_decay_steps,
        )
    if req.dqn_depth is not None:
        agent_overrides["depth"] = req.dqn_depth
    return harness.ExperimentSpec(
        name=req.name,
        device=req.device,
        workload=req.workload,
        initial_config=simenv.TunableConfig(
            readahead_pages=knobs.readahead_pages,
            queue_depth=knobs.queue_depth,
            cache_pages=knobs.cache_pages,
        ),
        agent_kind=req.agent_kind,
        baseline_kind=req.baseline_kind,
        loop=settings.loop_config(**loop_overrides),
        seeds=tuple(req.seeds),
        train_episodes=req.train_episodes,
        eval_episodes=req.eval_episodes,
        agent_overrides=agent_overrides,
    )


def _simulate_metrics_csv(name: str, device: str, seed: int,
                          knobs: simenv.TunableConfig, samples) -> str:
    lines = [harness.METRICS_HEADER]
    for i, m in enumerate(samples):
        lines.append(",".join([
            "simulate", name, device, "static", str(seed), str(i),
            harness._fmt(m.iops), harness._fmt(m.mean_latency_us),
            harness._fmt(m.p99_latency_us), harness._fmt(m.cache_hit_rate),
            harness._fmt(m.utilization), "",
            str(knobs.readahead_pages), str(knobs.queue_depth), str(knobs.cache_pages),
        ]))
    return "\n".join(lines) + "\n"


def create_app(settings: Config | None = None) -> FastAPI:
    base_settings = settings or default_config()
    app = FastAPI(title="rlstorage", version=__version__)
    app.state.settings = base_settings
    app.state.jobs = JobManager()

    def fail(status: int, exc: Exception):
        raise HTTPException(status_code=status, detail=str(exc))

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.get("/defaults", response_class=PlainTextResponse)
    def defaults():
        return DEFAULT_TEXT

    @app.post("/traces", response_model=models.TraceResponse)
    def generate_trace(req: models.TraceRequest):
        try:
            settings = _settings_for(base_settings, req.config_text)
            workload = harness.resolve_workload(req.workload, settings)
            trace = workload.build(req.seed)
        except (ConfigError, TraceError, harness.HarnessError, ValueError) as exc:
            fail(400, exc)
        reads = sum(1 for r in trace.requests if r.op == "R")
        return models.TraceResponse(
            workload=req.workload,
            requests=len(trace),
            address_space_bytes=trace.address_space_bytes,
            duration_us=trace.requests[-1].arrival_us if trace.requests else 0,
            read_fraction=reads / len(trace) if len(trace) else 0.0,
            trace_text=write_trace(trace).decode("utf-8"),
        )

    @app.post("/simulate", response_model=models.SimulateResponse)
    def simulate(req: models.SimulateRequest):
        try:
            settings = _settings_for(base_settings, req.config_text)
            profile = settings.device_profile(req.device)
            if req.trace_text is not None:
                trace = read_trace(req.trace_text)
                workload_name = "trace"
            elif req.workload is not None:
                workload = harness.resolve_workload(req.workload, settings)
                trace = workload.build(req.seed)
                workload_name = req.workload
            else:
                raise ValueError("either workload or trace_text is required")
            knobs = req.knobs or models.TunableKnobs(
                readahead_pages=settings.get_int("tunable.readahead_pages"),
                queue_depth=settings.get_int("tunable.queue_depth"),
                cache_pages=settings.get_int("tunable.cache_pages"),
            )
            config = simenv.TunableConfig(knobs.readahead_pages, knobs.queue_depth,
                                          knobs.cache_pages)
            records, samples = simenv.run(profile, config, trace, req.window_us)
        except (ConfigError, TraceError, harness.HarnessError,
                simenv.SimError, ValueError) as exc:
            fail(400, exc)
        n = len(records)
        latencies = sorted(r.latency_us for r in records)
        hits = sum(1 for r in records if r.cache_hit)
        duration = records[-1].complete_us if records else 0.0
        total_bytes = sum(r.request.size for r in records)
        return models.SimulateResponse(
            device=req.device,
            workload=workload_name,
            completions=n,
            duration_us=duration,
            throughput_bytes_per_s=total_bytes / (duration / 1e6) if duration else 0.0,
            cache_hit_rate=hits / n if n else None,
            mean_latency_us=sum(latencies) / n if n else None,
            p99_latency_us=simenv.p99_latency(latencies) if n else None,
            windows=[models.WindowMetrics(**{
                "window_us": m.window_us, "completions": m.completions,
                "iops": m.iops, "mean_latency_us": m.mean_latency_us,
                "p99_latency_us": m.p99_latency_us,
                "cache_hit_rate": m.cache_hit_rate,
                "utilization": m.utilization,
                "bytes_transferred": m.bytes_transferred,
            }) for m in samples],
            metrics_csv=_simulate_metrics_csv(workload_name, req.device, req.seed,
                                              config, samples),
        )

    def _submit(kind: str, req: models.ExperimentRequest, fn) -> models.JobSubmitted:
        try:
            settings = _settings_for(base_settings, req.config_text)
            spec = _experiment_spec(req, settings)
        except (ConfigError, harness.HarnessError, simenv.SimError, ValueError) as exc:
            fail(400, exc)
        job = app.state.jobs.submit(kind, lambda: fn(spec, settings))
        return models.JobSubmitted(job_id=job.job_id, kind=kind)

    @app.post("/experiments", response_model=models.JobSubmitted)
    def submit_experiment(req: models.ExperimentRequest):
        return _submit("experiment", req,
                       lambda spec, settings: harness.run_experiment(spec, settings))

    @app.post("/ablations", response_model=models.JobSubmitted)
    def submit_ablation(req: models.AblationRequest):
        mode, depths = req.mode, tuple(req.depths)
        return _submit("ablation", req,
                       lambda spec, settings: harness.run_ablation(
                           spec, settings, mode=mode, depths=depths))

    @app.post("/train", response_model=models.JobSubmitted)
    def submit_train(req: models.TrainRequest):
        def run(spec, settings):
            result = harness.train_agent(spec, settings)
            blob = save_agent(result.agent)
            return models.TrainResponse(
                agent_kind=spec.agent_kind,
                agent_b64=base64.b64encode(blob).decode("ascii"),
                agent_bytes=len(blob),
                episode_reward_sums=list(result.episode_reward_sums),
                episode_returns=list(result.episode_returns),
            )
        return _submit("train", req, run)

    def _job_or_404(job_id: str):
        job = app.state.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"no job {job_id}")
        return job

    @app.get("/jobs/{job_id}", response_model=models.JobStatus)
    def job_status(job_id: str):
        job = _job_or_404(job_id)
        return models.JobStatus(job_id=job.job_id, kind=job.kind,
                                state=job.state, error=job.error)

    @app.get("/jobs/{job_id}/result")
    def job_result(job_id: str):
        job = _job_or_404(job_id)
        if job.state == "error":
            raise HTTPException(status_code=500, detail=job.error)
        if job.state != "done":
            raise HTTPException(status_code=409, detail=f"job is {job.state}")
        result = job.result
        if isinstance(result, harness.Report):
            return harness.report_to_dict(result)
        if isinstance(result, harness.AblationReport):
            return harness.ablation_to_dict(result)
        if isinstance(result, models.TrainResponse):
            return result
        raise HTTPException(status_code=500, detail="unrenderable job result")

    @app.get("/jobs/{job_id}/artifact", response_class=PlainTextResponse)
    def job_artifact(job_id: str, format: str = Query(default="text")):
        job = _job_or_404(job_id)
        if job.state != "done":
            raise HTTPException(status_code=409, detail=f"job is {job.state}")
        try:
            return _render(job.result, format)
        except harness.HarnessError as exc:
            fail(400, exc)

    @app.post("/reports/render", response_class=PlainTextResponse)
    def render_report(req: models.RenderRequest):
        kind = req.report.get("kind")
        try:
            if kind == "experiment":
                report = harness.report_from_dict(req.report)
            elif kind == "ablation":
                report = harness.ablation_from_dict(req.report)
            else:
                raise HTTPException(status_code=400,
                                    detail=f"unknown report kind {kind!r}")
            return _render(report, req.format)
        except (harness.HarnessError, KeyError, TypeError) as exc:
            fail(400, exc)

    def _render(result, fmt: str) -> str:
        if isinstance(result, harness.Report):
            if fmt == "metrics":
                return harness.emit_metrics(result).decode("utf-8")
            return harness.emit_report(result, fmt).decode("utf-8")
        if isinstance(result, harness.AblationReport):
            return harness.emit_ablation(result, fmt).decode("utf-8")
        raise HTTPException(status_code=400, detail="result has no renderable form")

    return app
