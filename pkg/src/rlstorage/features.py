"""Workload and performance features derived from completion windows.

The collector side of the control loop: each decision interval's completion
records are folded into a fixed-order FeatureVector, which is either
discretized into a single integer state (tabular agents) or normalized into
a float vector (function approximation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simenv import PAGE_BYTES

FEATURE_NAMES = (
    "mean_request_bytes",
    "read_fraction",
    "sequentiality",
    "arrival_rate_per_s",
    "mean_latency_us",
    "cache_hit_rate",
    "utilization",
)


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    mean_request_bytes: float
    read_fraction: float
    sequentiality: float
    arrival_rate_per_s: float
    mean_latency_us: float
    cache_hit_rate: float
    utilization: float

    def as_tuple(self) -> tuple[float, ...]:
        return (
            self.mean_request_bytes,
            self.read_fraction,
            self.sequentiality,
            self.arrival_rate_per_s,
            self.mean_latency_us,
            self.cache_hit_rate,
            self.utilization,
        )

    def as_array(self, dtype=np.float64) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=dtype)


ZERO_FEATURES = FeatureVector(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


def extract(records, window_us: float, previous: FeatureVector | None = None) -> FeatureVector:
    """Fold one window's completion records into a FeatureVector.

    An empty window carries the previous vector forward (the workload has not
    changed just because nothing completed); with no previous vector it is
    all zeros.  Sequentiality is the fraction of requests, after the first,
    whose first page immediately follows the preceding request's last page.
    Utilization is the fraction of the window covered by the union of the
    device service intervals of non-hit completions.
    """
    if window_us <= 0:
        raise FeatureError("window_us must be positive")
    n = len(records)
    if n == 0:
        return previous if previous is not None else ZERO_FEATURES
    total_bytes = 0
    reads = 0
    hits = 0
    seq_pairs = 0
    latency_sum = 0.0
    prev_next_page = None
    for rec in records:
        req = rec.request
        total_bytes += req.size
        if req.op == "R":
            reads += 1
        if rec.cache_hit:
            hits += 1
        latency_sum += rec.latency_us
        first_page = req.offset // PAGE_BYTES
        if prev_next_page is not None and first_page == prev_next_page:
            seq_pairs += 1
        prev_next_page = (req.offset + req.size - 1) // PAGE_BYTES + 1
    intervals = sorted(
        (rec.submit_us, rec.complete_us) for rec in records if not rec.cache_hit
    )
    busy = 0.0
    cur_start = cur_end = None
    for s, e in intervals:
        if cur_end is None or s > cur_end:
            if cur_end is not None:
                busy += cur_end - cur_start
            cur_start, cur_end = s, e
        elif e > cur_end:
            cur_end = e
    if cur_end is not None:
        busy += cur_end - cur_start
    return FeatureVector(
        mean_request_bytes=total_bytes / n,
        read_fraction=reads / n,
        sequentiality=seq_pairs / (n - 1) if n > 1 else 0.0,
        arrival_rate_per_s=n / (window_us / 1e6),
        mean_latency_us=latency_sum / n,
        cache_hit_rate=hits / n,
        utilization=min(1.0, busy / window_us),
    )


@dataclass(frozen=True)
class FeatureBounds:
    """Per-feature [min, max) ranges used for normalization and binning."""

    mins: tuple[float, ...]
    maxs: tuple[float, ...]

    def __post_init__(self):
        if len(self.mins) != len(FEATURE_NAMES) or len(self.maxs) != len(FEATURE_NAMES):
            raise FeatureError(f"bounds must cover all {len(FEATURE_NAMES)} features")
        for name, lo, hi in zip(FEATURE_NAMES, self.mins, self.maxs):
            if not lo < hi:
                raise FeatureError(f"bounds for {name} must satisfy min < max")


DEFAULT_BOUNDS = FeatureBounds(
    mins=(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    maxs=(524_288.0, 1.0, 1.0, 1_000_000.0, 100_000.0, 1.0, 1.0),
)


def normalize(vector: FeatureVector, bounds: FeatureBounds = DEFAULT_BOUNDS) -> np.ndarray:
    """Scale each feature to [0, 1], clipping outliers at the bounds."""
    raw = vector.as_array()
    mins = np.asarray(bounds.mins)
    maxs = np.asarray(bounds.maxs)
    return np.clip((raw - mins) / (maxs - mins), 0.0, 1.0)


@dataclass(frozen=True)
class BinningScheme:
    """Which features feed the tabular state, and the bin edges for each.

    `feature_names` is ordered most-significant first for the mixed-radix
    state encoding.  Each feature gets len(edges)+1 bins; a value lands in
    bin i when it is below edges[i] (last bin catches everything else).
    """

    feature_names: tuple[str, ...]
    edges: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if not self.feature_names:
            raise FeatureError("at least one feature required")
        for name in self.feature_names:
            if name not in FEATURE_NAMES:
                raise FeatureError(f"unknown feature {name!r}")
        if len(self.edges) != len(self.feature_names):
            raise FeatureError("one edge tuple per feature required")
        for name, edge in zip(self.feature_names, self.edges):
            if not edge:
                raise FeatureError(f"{name}: at least one edge required")
            if any(b <= a for a, b in zip(edge, edge[1:])):
                raise FeatureError(f"{name}: edges must be strictly increasing")

    @property
    def radices(self) -> tuple[int, ...]:
        return tuple(len(e) + 1 for e in self.edges)

    def state_count(self) -> int:
        count = 1
        for r in self.radices:
            count *= r
        return count


DEFAULT_SCHEME = BinningScheme(
    feature_names=("sequentiality", "read_fraction", "utilization", "cache_hit_rate"),
    edges=((0.33, 0.66),) * 4,
)


def bin_value(value: float, edges) -> int:
    for i, edge in enumerate(edges):
        if value < edge:
            return i
    return len(edges)


def encode_bins(bins, radices) -> int:
    """Mixed-radix pack, first digit most significant."""
    if len(bins) != len(radices):
        raise FeatureError("bins and radices must have equal length")
    state = 0
    for b, r in zip(bins, radices):
        if not 0 <= b < r:
            raise FeatureError(f"bin {b} out of range for radix {r}")
        state = state * r + b
    return state


def decode_state(state: int, radices) -> tuple[int, ...]:
    if state < 0:
        raise FeatureError("state must be >= 0")
    bins = []
    for r in reversed(radices):
        bins.append(state % r)
        state //= r
    if state:
        raise FeatureError("state exceeds the scheme's state count")
    return tuple(reversed(bins))


def discretize(vector: FeatureVector, scheme: BinningScheme = DEFAULT_SCHEME) -> int:
    """FeatureVector to a single tabular state id under the scheme."""
    values = dict(zip(FEATURE_NAMES, vector.as_tuple()))
    bins = [bin_value(values[name], edge) for name, edge in zip(scheme.feature_names, scheme.edges)]
    return encode_bins(bins, scheme.radices)
