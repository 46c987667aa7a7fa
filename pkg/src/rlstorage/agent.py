"""Learning policies over the tunable knobs: tabular Q-learning and a DQN.

Both agents share the same seven-action interface (no-op plus halve/double
for each knob) and the same transition-driven learning entry point, so the
control loop does not care which is behind it.  A third "none" kind never
moves a knob and backs the static baseline.

Serialized form (little-endian): magic b"RLSA", version u8, kind u8
(0 tabular, 1 dqn); tabular payload is u32 state count, u32 action count,
then the Q-table row-major float32; dqn payload is the online network in
the network format.  Hyperparameters are runtime configuration, not part
of the artifact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import neuralnet
from .features import (
    DEFAULT_BOUNDS,
    DEFAULT_SCHEME,
    BinningScheme,
    FeatureBounds,
    FeatureVector,
    discretize,
    normalize,
)
from .simenv import (
    CACHE_PAGES_MAX,
    QUEUE_DEPTH_MAX,
    READAHEAD_MAX,
    TunableConfig,
)

AGENT_MAGIC = b"RLSA"
AGENT_VERSION = 1
_KIND_CODES = {"tabular": 0, "dqn": 1}

N_ACTIONS = 7
ACTION_NOOP = 0
ACTION_READAHEAD_DOWN = 1
ACTION_READAHEAD_UP = 2
ACTION_QUEUE_DOWN = 3
ACTION_QUEUE_UP = 4
ACTION_CACHE_DOWN = 5
ACTION_CACHE_UP = 6

ACTION_NAMES = (
    "noop",
    "readahead/2",
    "readahead*2",
    "queue/2",
    "queue*2",
    "cache/2",
    "cache*2",
)

DEFAULT_ALPHA = 0.1
DEFAULT_GAMMA = 0.9
DEFAULT_REPLAY_CAPACITY = 4096
DEFAULT_BATCH_SIZE = 32
DEFAULT_TARGET_SYNC = 250
DEFAULT_DQN_LEARNING_RATE = 0.005
DEFAULT_DQN_HIDDEN = 16
DEFAULT_DQN_DEPTH = 3


class AgentError(ValueError):
    pass


def apply_action(config: TunableConfig, action: int) -> TunableConfig:
    """New knob settings after one action; saturates at each knob's bounds."""
    if not 0 <= action < N_ACTIONS:
        raise AgentError(f"action must be in [0, {N_ACTIONS}), got {action}")
    ra, qd, cp = config.readahead_pages, config.queue_depth, config.cache_pages
    if action == ACTION_READAHEAD_DOWN:
        ra //= 2
    elif action == ACTION_READAHEAD_UP:
        ra = min(READAHEAD_MAX, max(1, ra * 2))
    elif action == ACTION_QUEUE_DOWN:
        qd = max(1, qd // 2)
    elif action == ACTION_QUEUE_UP:
        qd = min(QUEUE_DEPTH_MAX, qd * 2)
    elif action == ACTION_CACHE_DOWN:
        cp = max(1, cp // 2)
    elif action == ACTION_CACHE_UP:
        cp = min(CACHE_PAGES_MAX, cp * 2)
    return TunableConfig(ra, qd, cp)


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear exploration decay from start to end over decay_steps."""

    start: float = 1.0
    end: float = 0.05
    decay_steps: int = 2000

    def __post_init__(self):
        if not (0.0 <= self.end <= self.start <= 1.0):
            raise AgentError("need 0 <= end <= start <= 1")
        if self.decay_steps < 1:
            raise AgentError("decay_steps must be >= 1")

    def value(self, step: int) -> float:
        frac = min(1.0, max(0.0, step / self.decay_steps))
        return self.start + (self.end - self.start) * frac


def select_action(q_values, epsilon: float, rng) -> int:
    """Epsilon-greedy; greedy ties resolve to the lowest action index."""
    if rng.random() < epsilon:
        return int(rng.integers(0, len(q_values)))
    return int(np.argmax(q_values))


def q_update(table, state: int, action: int, reward: float, next_state: int,
             alpha: float, gamma: float) -> float:
    """One tabular Bellman update; returns the stored new value."""
    q = float(table[state, action])
    target = reward + gamma * float(np.max(table[next_state]))
    table[state, action] = q + alpha * (target - q)
    return float(table[state, action])


def discounted_return(rewards, gamma: float) -> float:
    total = 0.0
    for r in reversed(list(rewards)):
        total = r + gamma * total
    return total


@dataclass(frozen=True)
class Transition:
    """One decision-interval step: state under which `action` was taken, the
    reward observed over the following interval, and the state after it."""

    state: object
    action: int
    reward: float
    next_state: object
    terminal: bool = False


class ReplayBuffer:
    """Ring buffer with seeded uniform sampling (with replacement)."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise AgentError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, transition: Transition):
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._next] = transition
        self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng) -> list[Transition]:
        if not self._items:
            raise AgentError("cannot sample an empty buffer")
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]


class TabularAgent:
    kind = "tabular"

    def __init__(self, scheme: BinningScheme = DEFAULT_SCHEME, *,
                 alpha: float = DEFAULT_ALPHA, gamma: float = DEFAULT_GAMMA,
                 schedule: EpsilonSchedule = EpsilonSchedule(), seed=0,
                 n_actions: int = N_ACTIONS):
        self.scheme = scheme
        self.alpha = alpha
        self.gamma = gamma
        self.schedule = schedule
        self.values = np.zeros((scheme.state_count(), n_actions), dtype=np.float32)
        self.rng = np.random.default_rng(seed)
        self.steps = 0

    def state_of(self, vector: FeatureVector) -> int:
        return discretize(vector, self.scheme)

    def act(self, state: int, explore: bool = True) -> int:
        if not explore:
            return int(np.argmax(self.values[state]))
        epsilon = self.schedule.value(self.steps)
        self.steps += 1
        return select_action(self.values[state], epsilon, self.rng)

    def learn(self, transition: Transition) -> float:
        s, a = transition.state, transition.action
        q = float(self.values[s, a])
        if transition.terminal:
            target = transition.reward
        else:
            target = transition.reward + self.gamma * float(np.max(self.values[transition.next_state]))
        self.values[s, a] = q + self.alpha * (target - q)
        return float(self.values[s, a])


def _seed_key(seed):
    return tuple(seed) if isinstance(seed, (tuple, list)) else (int(seed),)


class DqnAgent:
    kind = "dqn"

    def __init__(self, bounds: FeatureBounds = DEFAULT_BOUNDS, *,
                 hidden_size: int = DEFAULT_DQN_HIDDEN, depth: int = DEFAULT_DQN_DEPTH,
                 gamma: float = DEFAULT_GAMMA, schedule: EpsilonSchedule = EpsilonSchedule(),
                 learning_rate: float = DEFAULT_DQN_LEARNING_RATE,
                 batch_size: int = DEFAULT_BATCH_SIZE,
                 replay_capacity: int = DEFAULT_REPLAY_CAPACITY,
                 target_sync_interval: int = DEFAULT_TARGET_SYNC,
                 seed=0, n_features: int = 7, n_actions: int = N_ACTIONS,
                 online: neuralnet.Mlp | None = None):
        if depth < 1:
            raise AgentError("depth (weight layers) must be >= 1")
        self.bounds = bounds
        self.gamma = gamma
        self.schedule = schedule
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.target_sync_interval = target_sync_interval
        self.rng = np.random.default_rng(seed)
        if online is None:
            sizes = [n_features] + [hidden_size] * (depth - 1) + [n_actions]
            online = neuralnet.mlp_new(sizes, (0x6E65, *_seed_key(seed)))
        self.online = online
        self.target = neuralnet.clone(online)
        self.replay = ReplayBuffer(replay_capacity)
        self.steps = 0
        self.train_steps = 0

    def state_of(self, vector: FeatureVector) -> np.ndarray:
        return normalize(vector, self.bounds).astype(np.float32)

    def act(self, state: np.ndarray, explore: bool = True) -> int:
        q = self.online.forward(state)
        if not explore:
            return int(np.argmax(q))
        epsilon = self.schedule.value(self.steps)
        self.steps += 1
        return select_action(q, epsilon, self.rng)

    def learn(self, transition: Transition) -> float | None:
        """Store and, once the buffer can fill a batch, do one training step."""
        self.replay.push(transition)
        if len(self.replay) < self.batch_size:
            return None
        batch = self.replay.sample(self.batch_size, self.rng)
        loss = dqn_train_step(self, batch)
        if self.train_steps % self.target_sync_interval == 0:
            target_sync(self)
        return loss


def dqn_train_step(agent: DqnAgent, batch) -> float:
    """One SGD step on the squared TD error of a batch; returns pre-step loss.

    Targets come from the frozen target network: r + gamma * max_a' Q_t(s',a'),
    or just r for terminal transitions.
    """
    n = len(batch)
    states = np.stack([t.state for t in batch]).astype(np.float32)
    next_states = np.stack([t.next_state for t in batch]).astype(np.float32)
    rewards = np.array([t.reward for t in batch], dtype=np.float32)
    actions = np.array([t.action for t in batch], dtype=np.int64)
    live = np.array([0.0 if t.terminal else 1.0 for t in batch], dtype=np.float32)
    next_best = agent.target.forward_batch(next_states).max(axis=1)
    targets = rewards + np.float32(agent.gamma) * next_best * live
    predictions = agent.online.forward_batch(states)
    chosen = predictions[np.arange(n), actions]
    errors = chosen - targets
    loss = float(np.mean(errors ** 2))
    out_grad = np.zeros_like(predictions)
    out_grad[np.arange(n), actions] = 2.0 * errors / n
    grads = neuralnet.backward_batch(agent.online, states, out_grad)
    neuralnet.sgd_step(agent.online, grads, agent.learning_rate)
    agent.train_steps += 1
    return loss


def target_sync(agent: DqnAgent):
    neuralnet.copy_parameters(agent.online, agent.target)


class StaticAgent:
    """The no-tuning policy: knobs stay wherever they started."""

    kind = "none"

    def state_of(self, vector: FeatureVector) -> int:
        return 0

    def act(self, state, explore: bool = True) -> int:
        return ACTION_NOOP

    def learn(self, transition: Transition):
        return None


def make_agent(kind: str, *, seed=0, scheme: BinningScheme = DEFAULT_SCHEME,
               bounds: FeatureBounds = DEFAULT_BOUNDS, alpha: float = DEFAULT_ALPHA,
               gamma: float = DEFAULT_GAMMA, schedule: EpsilonSchedule | None = None,
               hidden_size: int = DEFAULT_DQN_HIDDEN, depth: int = DEFAULT_DQN_DEPTH,
               learning_rate: float = DEFAULT_DQN_LEARNING_RATE,
               batch_size: int = DEFAULT_BATCH_SIZE,
               replay_capacity: int = DEFAULT_REPLAY_CAPACITY,
               target_sync_interval: int = DEFAULT_TARGET_SYNC):
    if schedule is None:
        schedule = EpsilonSchedule()
    if kind == "tabular":
        return TabularAgent(scheme, alpha=alpha, gamma=gamma, schedule=schedule, seed=seed)
    if kind == "dqn":
        return DqnAgent(bounds, hidden_size=hidden_size, depth=depth, gamma=gamma,
                        schedule=schedule, learning_rate=learning_rate,
                        batch_size=batch_size, replay_capacity=replay_capacity,
                        target_sync_interval=target_sync_interval, seed=seed)
    if kind == "none":
        return StaticAgent()
    raise AgentError(f"unknown agent kind {kind!r}")


def save_agent(agent) -> bytes:
    out = bytearray()
    out += AGENT_MAGIC
    if agent.kind == "tabular":
        out += struct.pack("<BB", AGENT_VERSION, _KIND_CODES["tabular"])
        n_states, n_actions = agent.values.shape
        out += struct.pack("<II", n_states, n_actions)
        out += np.ascontiguousarray(agent.values, dtype="<f4").tobytes()
    elif agent.kind == "dqn":
        out += struct.pack("<BB", AGENT_VERSION, _KIND_CODES["dqn"])
        out += neuralnet.mlp_to_bytes(agent.online)
    else:
        raise AgentError(f"agent kind {agent.kind!r} has no serialized form")
    return bytes(out)


def load_agent(data: bytes, *, scheme: BinningScheme = DEFAULT_SCHEME,
               bounds: FeatureBounds = DEFAULT_BOUNDS, seed=0, **hyper):
    """Rebuild an agent from bytes; hyperparameters come from the caller."""
    if len(data) < 6 or data[:4] != AGENT_MAGIC:
        raise AgentError("bad magic; not a serialized agent")
    version, kind_code = struct.unpack_from("<BB", data, 4)
    if version != AGENT_VERSION:
        raise AgentError(f"unsupported version {version}")
    if kind_code == _KIND_CODES["tabular"]:
        if len(data) < 14:
            raise AgentError("truncated table header")
        n_states, n_actions = struct.unpack_from("<II", data, 6)
        expected = 14 + n_states * n_actions * 4
        if len(data) != expected:
            raise AgentError(f"expected {expected} bytes for table payload, got {len(data)}")
        if n_states != scheme.state_count():
            raise AgentError(
                f"table has {n_states} states but the scheme produces {scheme.state_count()}"
            )
        agent = TabularAgent(scheme, seed=seed, n_actions=n_actions, **hyper)
        table = np.frombuffer(data, dtype="<f4", count=n_states * n_actions, offset=14)
        agent.values = table.reshape(n_states, n_actions).copy()
        return agent
    if kind_code == _KIND_CODES["dqn"]:
        online = neuralnet.mlp_from_bytes(data[6:])
        sizes = online.layer_sizes
        return DqnAgent(bounds, seed=seed, n_features=sizes[0], n_actions=sizes[-1],
                        hidden_size=sizes[1] if len(sizes) > 2 else DEFAULT_DQN_HIDDEN,
                        depth=len(sizes) - 1, online=online, **hyper)
    raise AgentError(f"unknown agent kind code {kind_code}")
