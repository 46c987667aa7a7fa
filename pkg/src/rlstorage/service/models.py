"""Request and response shapes for the HTTP API.

Requests mirror the CLI surface: name a workload preset and a device, adjust
knobs, optionally override configuration with the same `section.key = value`
text the config files use.  Long-running work (experiments, ablations,
training) returns a job id to poll.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class TunableKnobs(BaseModel):
    readahead_pages: int = 8
    queue_depth: int = 32
    cache_pages: int = 4096


class TraceRequest(BaseModel):
    workload: str
    seed: int = 0
    config_text: str | None = None


class TraceResponse(BaseModel):
    workload: str
    requests: int
    address_space_bytes: int
    duration_us: int
    read_fraction: float
    trace_text: str


class SimulateRequest(BaseModel):
    device: str = "nvme"
    workload: str | None = None
    trace_text: str | None = None
    knobs: TunableKnobs | None = None
    window_us: float = Field(default=50_000.0, gt=0)
    seed: int = 0
    config_text: str | None = None


class WindowMetrics(BaseModel):
    window_us: float
    completions: int
    iops: float
    mean_latency_us: float | None
    p99_latency_us: float | None
    cache_hit_rate: float | None
    utilization: float
    bytes_transferred: int


class SimulateResponse(BaseModel):
    device: str
    workload: str
    completions: int
    duration_us: float
    throughput_bytes_per_s: float
    cache_hit_rate: float | None
    mean_latency_us: float | None
    p99_latency_us: float | None
    windows: list[WindowMetrics]
    metrics_csv: str


class LoopOverrides(BaseModel):
    """Optional per-request control-loop settings; unset fields keep config values."""

    decision_interval_us: float | None = None
    reward_lambda: float | None = None
    throughput_norm: float | None = None
    latency_norm_us: float | None = None
    smoothing_alpha: float | None = None
    smoothed_queue_actuation: bool | None = None
    feedback_enabled: bool | None = None
    collector_enabled: bool | None = None

    def as_kwargs(self) -> dict:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class ExperimentRequest(BaseModel):
    """Either name a bundled fixture or spell the experiment out."""

    fixture: str | None = None
    name: str = "adhoc"
    device: str = "nvme"
    workload: str = "kv-random"
    agent_kind: str = "tabular"
    baseline_kind: str = "static"
    knobs: TunableKnobs | None = None
    seeds: list[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5])
    train_episodes: int = Field(default=30, ge=0)
    eval_episodes: int = Field(default=1, ge=1)
    loop: LoopOverrides | None = None
    epsilon_decay_steps: int | None = None
    dqn_depth: int | None = None
    config_text: str | None = None


class AblationRequest(ExperimentRequest):
    mode: str = "components"  # components | depths
    depths: list[int] = Field(default_factory=lambda: [3, 4, 5])


class TrainRequest(ExperimentRequest):
    pass


class TrainResponse(BaseModel):
    agent_kind: str
    agent_b64: str
    agent_bytes: int
    episode_reward_sums: list[float]
    episode_returns: list[float]


class JobSubmitted(BaseModel):
    job_id: str
    kind: str


class JobStatus(BaseModel):
    job_id: str
    kind: str
    state: str  # queued | running | done | error
    error: str | None = None


class RenderRequest(BaseModel):
    report: dict
    format: str = "text"  # csv | text | plotdata | metrics
