"""Storage-stack simulator with a closed-loop RL tuner for readahead,
queue depth, and page-cache size.

Layering, lowest first: trace (workload generation and file format),
simenv (discrete-event device + cache model), features (window metrics to
state), neuralnet (small MLP), agent (tabular Q-learning / DQN), control
(the decision loop), harness (experiments, baselines, reports), config,
service (HTTP API), cli.
"""

from .agent import (
    DqnAgent,
    EpsilonSchedule,
    StaticAgent,
    TabularAgent,
    Transition,
    apply_action,
    load_agent,
    make_agent,
    save_agent,
)
from .config import Config, default_config, load_config, parse_config
from .control import EpisodeResult, LoopConfig, compute_reward, run_episode
from .features import BinningScheme, FeatureBounds, FeatureVector, discretize, extract
from .harness import (
    AblationReport,
    ExperimentSpec,
    Report,
    WorkloadSpec,
    emit_ablation,
    emit_metrics,
    emit_report,
    fixture_experiment,
    run_ablation,
    run_experiment,
)
from .simenv import (
    DEVICE_PRESETS,
    DeviceProfile,
    LruCache,
    MetricsSample,
    Simulator,
    TunableConfig,
)
from .trace import IoRequest, PhaseSpec, Trace, gen_phased, gen_random, gen_sequential

__version__ = "0.1.0"
