"""Line-oriented configuration: `section.key = value`, one setting per line.

Blank lines and `#` comments are ignored.  Every tunable default ships in
DEFAULT_TEXT (also served by `defaults` in the CLI), so a full reference
config is always one command away.  Values are scalars or comma-separated
lists; workload phase lines hold space-separated key=value tokens.

Unknown keys are rejected except under `workload.<name>.`, where users may
define their own named workloads next to the bundled presets.
"""

from __future__ import annotations

from dataclasses import dataclass

from .agent import EpsilonSchedule
from .control import LoopConfig
from .features import FEATURE_NAMES, BinningScheme, FeatureBounds
from .simenv import DeviceProfile, TunableConfig
from .trace import PhaseSpec


class ConfigError(ValueError):
    pass


DEFAULT_TEXT = """\
# Device presets (latency model per device).
device.nvme.base_latency_us = 80.0
device.nvme.per_byte_us = 0.01
device.nvme.seek_penalty_us = 0.0
device.nvme.internal_parallelism = 64
device.sata.base_latency_us = 400.0
device.sata.per_byte_us = 0.02
device.sata.seek_penalty_us = 400.0
device.sata.internal_parallelism = 32

# Initial knob settings.
tunable.readahead_pages = 8
tunable.queue_depth = 32
tunable.cache_pages = 4096

# Tabular state construction: which features, bin edges, and the
# normalization bounds (min,max) used by function approximation.
features.state_features = sequentiality,read_fraction,utilization,cache_hit_rate
features.bin_edges = 0.33,0.66
features.bounds.mean_request_bytes = 0,524288
features.bounds.read_fraction = 0,1
features.bounds.sequentiality = 0,1
features.bounds.arrival_rate_per_s = 0,1000000
features.bounds.mean_latency_us = 0,100000
features.bounds.cache_hit_rate = 0,1
features.bounds.utilization = 0,1

# Learning hyperparameters.
agent.alpha = 0.1
agent.gamma = 0.9
agent.epsilon_start = 1.0
agent.epsilon_end = 0.05
agent.epsilon_decay_steps = 2000
agent.replay_capacity = 4096
agent.batch_size = 32
agent.target_sync_interval = 250
agent.dqn_learning_rate = 0.005
agent.dqn_hidden_size = 16
agent.dqn_depth = 3

# Control loop: decision cadence, reward shape, actuation.
control.decision_interval_us = 50000
control.reward_lambda = 0.5
control.throughput_norm = 100000000
control.latency_norm_us = 10000
control.smoothing_alpha = 0.5
control.smoothed_queue_actuation = false
control.gamma_adj = 0.5

# Harness: offered-load calibration, report scoring, experiment shape.
harness.reference_throughput = 200000000
harness.objective_weights = 1.0,-0.5
harness.gain_beta = 1.0
harness.seeds = 1,2,3,4,5
harness.train_episodes = 30
harness.eval_episodes = 2
harness.window_us = 50000

# Workload presets.  Phase lines: space-separated key=value tokens with keys
# duration_us, pattern, block_size, read_fraction, sequential_fraction,
# target_utilization.
workload.kv-random.pattern = random
workload.kv-random.block_size = 4096
workload.kv-random.read_fraction = 0.8
workload.kv-random.count = 10000
workload.kv-random.inter_arrival_us = 20
workload.kv-random.address_space = 536870912
workload.scan-sequential.pattern = sequential
workload.scan-sequential.block_size = 131072
workload.scan-sequential.count = 10000
workload.scan-sequential.inter_arrival_us = 100
workload.scan-sequential.start_offset = 0
workload.oltp-mixed.pattern = phased
workload.oltp-mixed.address_space = 536870912
workload.oltp-mixed.phase0 = duration_us=1024000 pattern=mixed block_size=8192 read_fraction=0.7 sequential_fraction=0.3 target_utilization=0.2
workload.oltp-mixed.phase1 = duration_us=2048000 pattern=mixed block_size=65536 read_fraction=0.7 sequential_fraction=0.3 target_utilization=0.8
workload.phase-flip.pattern = phased
workload.phase-flip.address_space = 536870912
workload.phase-flip.phase0 = duration_us=750000 pattern=sequential block_size=16384 read_fraction=1.0 target_utilization=0.6
workload.phase-flip.phase1 = duration_us=750000 pattern=random block_size=16384 read_fraction=0.8 target_utilization=0.6
"""

_WORKLOAD_KEYS = {
    "pattern", "block_size", "read_fraction", "count", "inter_arrival_us",
    "address_space", "start_offset", "sequential_fraction", "path",
}
_PHASE_KEYS = {
    "duration_us", "pattern", "block_size", "read_fraction",
    "sequential_fraction", "target_utilization",
}


def _default_keys() -> set[str]:
    keys = set()
    for line in DEFAULT_TEXT.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            keys.add(line.split("=", 1)[0].strip())
    return keys


def _known_key(key: str) -> bool:
    if key in _KNOWN_KEYS:
        return True
    parts = key.split(".")
    if len(parts) == 3 and parts[0] == "workload":
        return parts[2] in _WORKLOAD_KEYS or parts[2].startswith("phase")
    return False


def parse_text(text: str, *, base: dict[str, str] | None = None) -> dict[str, str]:
    values = dict(base) if base else {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected section.key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or "." not in key:
            raise ConfigError(f"line {lineno}: key must look like section.key")
        if not _known_key(key):
            raise ConfigError(f"line {lineno}: unknown setting {key!r}")
        values[key] = value
    return values


class Config:
    """Typed access over the parsed key/value map."""

    def __init__(self, values: dict[str, str]):
        self.values = values

    # -- primitive getters ---------------------------------------------------

    def get_str(self, key: str) -> str:
        try:
            return self.values[key]
        except KeyError:
            raise ConfigError(f"missing setting {key!r}") from None

    def get_int(self, key: str) -> int:
        raw = self.get_str(key)
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {raw!r}") from None

    def get_float(self, key: str) -> float:
        raw = self.get_str(key)
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {raw!r}") from None

    def get_bool(self, key: str) -> bool:
        raw = self.get_str(key).lower()
        if raw in ("true", "yes", "1"):
            return True
        if raw in ("false", "no", "0"):
            return False
        raise ConfigError(f"{key} must be true or false, got {raw!r}")

    def get_list(self, key: str) -> list[str]:
        raw = self.get_str(key)
        return [part.strip() for part in raw.split(",") if part.strip()]

    def get_floats(self, key: str) -> list[float]:
        try:
            return [float(p) for p in self.get_list(key)]
        except ValueError:
            raise ConfigError(f"{key} must be a comma-separated number list") from None

    def get_ints(self, key: str) -> list[int]:
        try:
            return [int(p) for p in self.get_list(key)]
        except ValueError:
            raise ConfigError(f"{key} must be a comma-separated integer list") from None

    # -- assembled objects ---------------------------------------------------

    def device_profile(self, name: str) -> DeviceProfile:
        prefix = f"device.{name}."
        if f"{prefix}base_latency_us" not in self.values:
            raise ConfigError(f"unknown device preset {name!r}")
        return DeviceProfile(
            name=name,
            base_latency_us=self.get_float(prefix + "base_latency_us"),
            per_byte_us=self.get_float(prefix + "per_byte_us"),
            seek_penalty_us=self.get_float(prefix + "seek_penalty_us"),
            internal_parallelism=self.get_int(prefix + "internal_parallelism"),
        )

    def tunable_config(self) -> TunableConfig:
        return TunableConfig(
            readahead_pages=self.get_int("tunable.readahead_pages"),
            queue_depth=self.get_int("tunable.queue_depth"),
            cache_pages=self.get_int("tunable.cache_pages"),
        )

    def loop_config(self, **overrides) -> LoopConfig:
        kwargs = dict(
            decision_interval_us=self.get_float("control.decision_interval_us"),
            reward_lambda=self.get_float("control.reward_lambda"),
            throughput_norm=self.get_float("control.throughput_norm"),
            latency_norm_us=self.get_float("control.latency_norm_us"),
            smoothing_alpha=self.get_float("control.smoothing_alpha"),
            smoothed_queue_actuation=self.get_bool("control.smoothed_queue_actuation"),
        )
        kwargs.update(overrides)
        return LoopConfig(**kwargs)

    def epsilon_schedule(self) -> EpsilonSchedule:
        return EpsilonSchedule(
            start=self.get_float("agent.epsilon_start"),
            end=self.get_float("agent.epsilon_end"),
            decay_steps=self.get_int("agent.epsilon_decay_steps"),
        )

    def binning_scheme(self) -> BinningScheme:
        names = tuple(self.get_list("features.state_features"))
        edges = tuple(self.get_floats("features.bin_edges"))
        return BinningScheme(names, tuple(edges for _ in names))

    def feature_bounds(self) -> FeatureBounds:
        mins, maxs = [], []
        for name in FEATURE_NAMES:
            pair = self.get_floats(f"features.bounds.{name}")
            if len(pair) != 2:
                raise ConfigError(f"features.bounds.{name} must be min,max")
            mins.append(pair[0])
            maxs.append(pair[1])
        return FeatureBounds(tuple(mins), tuple(maxs))

    def agent_kwargs(self) -> dict:
        return dict(
            scheme=self.binning_scheme(),
            bounds=self.feature_bounds(),
            alpha=self.get_float("agent.alpha"),
            gamma=self.get_float("agent.gamma"),
            schedule=self.epsilon_schedule(),
            hidden_size=self.get_int("agent.dqn_hidden_size"),
            depth=self.get_int("agent.dqn_depth"),
            learning_rate=self.get_float("agent.dqn_learning_rate"),
            batch_size=self.get_int("agent.batch_size"),
            replay_capacity=self.get_int("agent.replay_capacity"),
            target_sync_interval=self.get_int("agent.target_sync_interval"),
        )

    def validate(self) -> None:
        """Exercise every typed accessor so bad values fail up front.

        Parsing keeps raw strings and coerces lazily; this forces the
        coercions so a config file can be rejected before any work starts.
        """
        for name in ("nvme", "sata"):
            if f"device.{name}.base_latency_us" in self.values:
                self.device_profile(name)
        self.tunable_config()
        self.loop_config()
        self.agent_kwargs()
        self.get_float("control.gamma_adj")
        self.get_float("harness.reference_throughput")
        self.get_floats("harness.objective_weights")
        self.get_float("harness.gain_beta")
        self.get_ints("harness.seeds")
        self.get_int("harness.train_episodes")
        self.get_float("harness.window_us")
        for name in self.workload_names():
            params = self.workload_params(name)
            if any(k.startswith("phase") for k in params):
                self.workload_phases(name)

    def workload_names(self) -> list[str]:
        names = []
        for key in self.values:
            parts = key.split(".")
            if parts[0] == "workload" and parts[1] not in names:
                names.append(parts[1])
        return names

    def workload_params(self, name: str) -> dict[str, str]:
        prefix = f"workload.{name}."
        params = {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}
        if not params:
            raise ConfigError(f"unknown workload {name!r}")
        return params

    def workload_phases(self, name: str) -> list[PhaseSpec]:
        params = self.workload_params(name)
        phases = []
        for i in range(len(params)):
            token_line = params.get(f"phase{i}")
            if token_line is None:
                break
            phases.append(_parse_phase(name, i, token_line))
        if not phases:
            raise ConfigError(f"workload {name!r} has no phase lines")
        return phases


def _parse_phase(workload: str, index: int, line: str) -> PhaseSpec:
    where = f"workload.{workload}.phase{index}"
    fields: dict[str, str] = {}
    for token in line.split():
        if "=" not in token:
            raise ConfigError(f"{where}: token {token!r} is not key=value")
        k, _, v = token.partition("=")
        if k not in _PHASE_KEYS:
            raise ConfigError(f"{where}: unknown phase key {k!r}")
        fields[k] = v
    try:
        return PhaseSpec(
            duration_us=int(fields["duration_us"]),
            pattern=fields["pattern"],
            block_size_bytes=int(fields["block_size"]),
            read_fraction=float(fields["read_fraction"]),
            target_utilization=float(fields["target_utilization"]),
            sequential_fraction=float(fields.get("sequential_fraction", "0.5")),
        )
    except KeyError as exc:
        raise ConfigError(f"{where}: missing phase key {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


_KNOWN_KEYS = _default_keys()


def default_config() -> Config:
    return Config(parse_text(DEFAULT_TEXT))


def parse_config(text: str) -> Config:
    """User text overlaid on the defaults."""
    return Config(parse_text(text, base=parse_text(DEFAULT_TEXT)))


def load_config(path) -> Config:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
