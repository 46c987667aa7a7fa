"""Deterministic discrete-event model of a block device behind an LRU page cache.

The model is intentionally small but keeps the behaviours the tuner feeds on:

* Requests are admitted in arrival order to an unbounded FIFO queue.  Up to
  c = min(queue_depth, device internal_parallelism) requests are in service
  at once, so queue depth only helps until it saturates the device.
* Service time for a transfer of n bytes is
      base_latency_us + n * per_byte_us (+ seek_penalty_us if the transfer
      does not start where the previous one ended).
* Reads are served at page (4096 B) granularity through a write-through LRU
  cache.  A read whose pages are all resident completes in a fixed 5 us hit
  path and never touches the device.
* A single-stream detector marks a read sequential when its first page is
  exactly the page after the previous read's last page.  On a sequential
  miss the device transfer is extended with readahead_pages times the pages
  spanned by the request, so a readahead of R serves the next R requests of
  an undisturbed stream from cache.

Cache state changes synchronously when the arrival is processed, in arrival
order; the device queue only delays completion times.  That keeps cache
behaviour independent of queueing and makes every run a pure function of
(trace, device profile, tunables).

Event ordering is total: ties on simulated time break on insertion order, so
two runs of the same inputs produce byte-identical completion logs.
"""

from __future__ import annotations

import heapq
import math
from bisect import bisect_right
from collections import OrderedDict, deque
from dataclasses import dataclass, replace

from .trace import READ, WRITE, IoRequest, Trace

PAGE_BYTES = 4096
CACHE_HIT_LATENCY_US = 5.0

READAHEAD_MAX = 256
QUEUE_DEPTH_MAX = 1024
CACHE_PAGES_MAX = 1 << 22


class SimError(ValueError):
    pass


@dataclass(frozen=True)
class DeviceProfile:
    """Latency model of one device; presets below approximate NVMe and SATA."""

    name: str
    base_latency_us: float
    per_byte_us: float
    seek_penalty_us: float
    internal_parallelism: int

    def __post_init__(self):
        if self.base_latency_us < 0 or self.per_byte_us < 0 or self.seek_penalty_us < 0:
            raise SimError("latency parameters must be >= 0")
        if self.internal_parallelism < 1:
            raise SimError("internal_parallelism must be >= 1")


DEVICE_PRESETS = {
    "nvme": DeviceProfile("nvme", 80.0, 0.01, 0.0, 64),
    "sata": DeviceProfile("sata", 400.0, 0.02, 400.0, 32),
}


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class TunableConfig:
    """The three knobs under the tuner's control.

    All values are powers of two (readahead_pages may also be 0, meaning
    prefetch disabled) so that the halve/double action set walks the whole
    range.  queue_depth may hold intermediate integers only when the
    smoothed-actuation mode produces them.
    """

    readahead_pages: int = 8
    queue_depth: int = 32
    cache_pages: int = 4096

    def __post_init__(self):
        if not (0 <= self.readahead_pages <= READAHEAD_MAX):
            raise SimError(f"readahead_pages must be in [0, {READAHEAD_MAX}]")
        if self.readahead_pages and not _is_power_of_two(self.readahead_pages):
            raise SimError("readahead_pages must be 0 or a power of two")
        if not (1 <= self.queue_depth <= QUEUE_DEPTH_MAX):
            raise SimError(f"queue_depth must be in [1, {QUEUE_DEPTH_MAX}]")
        if not (1 <= self.cache_pages <= CACHE_PAGES_MAX):
            raise SimError(f"cache_pages must be in [1, {CACHE_PAGES_MAX}]")
        if not _is_power_of_two(self.cache_pages):
            raise SimError("cache_pages must be a power of two")


def service_time_us(profile: DeviceProfile, request: IoRequest, contiguous: bool) -> float:
    """Latency of one device transfer of the request's size."""
    t = profile.base_latency_us + request.size * profile.per_byte_us
    if not contiguous:
        t += profile.seek_penalty_us
    return t


def _transfer_time_us(profile: DeviceProfile, nbytes: int, contiguous: bool) -> float:
    t = profile.base_latency_us + nbytes * profile.per_byte_us
    if not contiguous:
        t += profile.seek_penalty_us
    return t


class LruCache:
    """Fixed-capacity page cache with least-recently-used eviction.

    Recency order is the order of `access` calls; within one call, pages are
    touched in list order.  Misses are inserted immediately (the simulator
    models cache fill as synchronous with arrival processing).
    """

    __slots__ = ("capacity", "_pages")

    def __init__(self, capacity: int):
        if capacity < 1:
            raise SimError("capacity must be >= 1")
        self.capacity = capacity
        self._pages: OrderedDict[int, None] = OrderedDict()

    def __len__(self) -> int:
        return len(self._pages)

    def __contains__(self, page: int) -> bool:
        return page in self._pages

    def access(self, page_ids) -> tuple[int, list[int], list[int]]:
        """Touch pages in order; returns (hit count, missed pages, evicted pages)."""
        if not page_ids:
            raise SimError("access requires at least one page")
        hits = 0
        misses: list[int] = []
        evicted: list[int] = []
        pages = self._pages
        for page in page_ids:
            if page in pages:
                pages.move_to_end(page)
                hits += 1
            else:
                pages[page] = None
                misses.append(page)
                if len(pages) > self.capacity:
                    evicted.append(pages.popitem(last=False)[0])
        return hits, misses, evicted

    def resize(self, capacity: int) -> list[int]:
        """Shrink or grow in place; returns pages evicted by a shrink."""
        if capacity < 1:
            raise SimError("capacity must be >= 1")
        self.capacity = capacity
        evicted = []
        while len(self._pages) > capacity:
            evicted.append(self._pages.popitem(last=False)[0])
        return evicted

    def pages(self) -> list[int]:
        """Resident pages from least to most recently used."""
        return list(self._pages)


@dataclass(frozen=True)
class CompletionRecord:
    request: IoRequest
    submit_us: float
    complete_us: float
    cache_hit: bool

    @property
    def latency_us(self) -> float:
        return self.complete_us - self.request.arrival_us


@dataclass(frozen=True)
class MetricsSample:
    """Aggregates over one wall-clock window of simulated time.

    Latency and hit-rate fields are None (absent, not zero) when the window
    saw no completions.  bytes_transferred counts request payload bytes only;
    readahead overhead shows up in utilization instead.
    """

    window_us: float
    completions: int
    iops: float
    mean_latency_us: float | None
    p99_latency_us: float | None
    cache_hit_rate: float | None
    utilization: float
    bytes_transferred: int


def p99_latency(latencies) -> float:
    """Nearest-rank percentile: the ceil(0.99 n)-th smallest value."""
    ordered = sorted(latencies)
    if not ordered:
        raise SimError("p99 of an empty sample")
    rank = math.ceil(0.99 * len(ordered))
    return ordered[rank - 1]


def summarize(records, window_us: float, busy_us: float) -> MetricsSample:
    """Fold completion records from one window into a MetricsSample."""
    if window_us <= 0:
        raise SimError("window_us must be positive")
    n = len(records)
    utilization = min(1.0, max(0.0, busy_us / window_us))
    if n == 0:
        return MetricsSample(window_us, 0, 0.0, None, None, None, utilization, 0)
    latencies = [r.latency_us for r in records]
    hits = sum(1 for r in records if r.cache_hit)
    nbytes = sum(r.request.size for r in records)
    return MetricsSample(
        window_us=window_us,
        completions=n,
        iops=n / (window_us / 1e6),
        mean_latency_us=sum(latencies) / n,
        p99_latency_us=p99_latency(latencies),
        cache_hit_rate=hits / n,
        utilization=utilization,
        bytes_transferred=nbytes,
    )


_ARRIVAL = 0
_COMPLETE = 1


class Simulator:
    """Event-driven execution of offered requests against one device.

    Usage: offer requests (offer_trace / offer), then advance_to(t) repeatedly
    or drain().  Completions are returned from the advancing call in
    completion order.  apply_config takes effect for work processed after the
    call; requests already in service finish under their old service time.
    """

    def __init__(self, profile: DeviceProfile, config: TunableConfig):
        self.profile = profile
        self.config = config
        self.clock_us = 0.0
        self._events: list[tuple[float, int, int, object]] = []
        self._seq = 0
        self._cache = LruCache(config.cache_pages)
        self._waiting: deque[tuple[IoRequest, int]] = deque()
        self._in_service = 0
        self._device_cursor: int | None = None  # next contiguous byte offset
        self._next_stream_page: int | None = None
        # closed busy periods as parallel (start, end, cumulative-busy-before) lists
        self._busy_starts: list[float] = []
        self._busy_ends: list[float] = []
        self._busy_prefix: list[float] = [0.0]
        self._busy_since: float | None = None
        self._offered = 0
        self._completed = 0

    # -- admission -----------------------------------------------------------

    def offer(self, request: IoRequest):
        if request.arrival_us < self.clock_us:
            raise SimError("cannot offer a request in the simulated past")
        self._push(request.arrival_us, _ARRIVAL, request)
        self._offered += 1

    def offer_trace(self, trace: Trace):
        for request in trace.requests:
            self.offer(request)

    def apply_config(self, config: TunableConfig):
        """Swap tunables now; cache shrink evicts LRU pages immediately."""
        self.config = config
        self._cache.resize(config.cache_pages)

    def pending(self) -> bool:
        return bool(self._events) or bool(self._waiting) or self._in_service > 0

    # -- event machinery -----------------------------------------------------

    def _push(self, time_us: float, kind: int, payload):
        heapq.heappush(self._events, (time_us, self._seq, kind, payload))
        self._seq += 1

    def advance_to(self, t_us: float) -> list[CompletionRecord]:
        """Process every event strictly before t_us; returns completions in order."""
        if t_us < self.clock_us:
            raise SimError("cannot advance backwards")
        done: list[CompletionRecord] = []
        events = self._events
        while events and events[0][0] < t_us:
            time_us, _, kind, payload = heapq.heappop(events)
            self.clock_us = time_us
            if kind == _ARRIVAL:
                self._handle_arrival(time_us, payload)
            else:
                self._handle_complete(time_us, payload, done)
        self.clock_us = t_us
        return done

    def drain(self) -> list[CompletionRecord]:
        """Run until no work remains."""
        done: list[CompletionRecord] = []
        events = self._events
        while events:
            time_us, _, kind, payload = heapq.heappop(events)
            self.clock_us = time_us
            if kind == _ARRIVAL:
                self._handle_arrival(time_us, payload)
            else:
                self._handle_complete(time_us, payload, done)
        return done

    def _handle_arrival(self, now: float, request: IoRequest):
        first_page = request.offset // PAGE_BYTES
        last_page = (request.offset + request.size - 1) // PAGE_BYTES
        span = last_page - first_page + 1
        if request.op == READ:
            sequential = first_page == self._next_stream_page
            self._next_stream_page = last_page + 1
            hits, missed, _ = self._cache.access(range(first_page, last_page + 1))
            if not missed:
                self._push(now + CACHE_HIT_LATENCY_US, _COMPLETE, (request, now, True))
                return
            prefetch_missing = 0
            readahead = self.config.readahead_pages
            if sequential and readahead > 0:
                ahead = range(last_page + 1, last_page + 1 + readahead * span)
                _, pre_missed, _ = self._cache.access(ahead)
                prefetch_missing = len(pre_missed)
            nbytes = (len(missed) + prefetch_missing) * PAGE_BYTES
        else:
            self._cache.access(range(first_page, last_page + 1))
            nbytes = request.size
        self._waiting.append((request, nbytes))
        self._start_services(now)

    def _start_services(self, now: float):
        limit = min(self.config.queue_depth, self.profile.internal_parallelism)
        while self._waiting and self._in_service < limit:
            request, nbytes = self._waiting.popleft()
            contiguous = request.offset == self._device_cursor
            self._device_cursor = request.offset + nbytes
            stime = _transfer_time_us(self.profile, nbytes, contiguous)
            if self._in_service == 0:
                self._busy_since = now
            self._in_service += 1
            self._push(now + stime, _COMPLETE, (request, now, False))

    def _handle_complete(self, now: float, payload, done: list):
        request, submit, cache_hit = payload
        if not cache_hit:
            self._in_service -= 1
            if self._in_service == 0:
                self._busy_starts.append(self._busy_since)
                self._busy_ends.append(now)
                self._busy_prefix.append(self._busy_prefix[-1] + (now - self._busy_since))
                self._busy_since = None
            self._start_services(now)
        self._completed += 1
        done.append(CompletionRecord(request, submit, now, cache_hit))

    # -- accounting ----------------------------------------------------------

    def _busy_before(self, t_us: float) -> float:
        """Total device busy time in [0, t_us)."""
        j = bisect_right(self._busy_ends, t_us)
        total = self._busy_prefix[j]
        if j < len(self._busy_starts) and self._busy_starts[j] < t_us:
            total += t_us - self._busy_starts[j]
        if self._busy_since is not None and self._busy_since < t_us:
            total += t_us - self._busy_since
        return total

    def busy_us_between(self, start_us: float, end_us: float) -> float:
        """Device busy time (any transfer in flight) overlapping [start, end)."""
        if end_us < start_us:
            raise SimError("end before start")
        return self._busy_before(end_us) - self._busy_before(start_us)

    def cache_pages_resident(self) -> list[int]:
        return self._cache.pages()


def run(profile: DeviceProfile, config: TunableConfig, trace: Trace,
        window_us: float = 50_000.0) -> tuple[list[CompletionRecord], list[MetricsSample]]:
    """Run a whole trace to completion and fold it into fixed windows.

    Windows are half-open [k*w, (k+1)*w); a completion exactly on a boundary
    counts in the later window.  At least one window is always returned so an
    empty trace yields a single all-idle sample.
    """
    sim = Simulator(profile, config)
    sim.offer_trace(trace)
    records = sim.drain()
    end = records[-1].complete_us if records else 0.0
    n_windows = max(1, math.ceil(end / window_us))
    if records and records[-1].complete_us == n_windows * window_us:
        n_windows += 1
    samples = []
    idx = 0
    for k in range(n_windows):
        lo, hi = k * window_us, (k + 1) * window_us
        chunk = []
        while idx < len(records) and records[idx].complete_us < hi:
            chunk.append(records[idx])
            idx += 1
        samples.append(summarize(chunk, window_us, sim.busy_us_between(lo, hi)))
    return records, samples
