"""Synthetic block-level workload generation and a portable trace file format.

Workloads are produced as `Trace` values: an address-space header plus a
time-ordered list of 512-byte-aligned read/write requests.  Generators cover
sequential scans, uniform random access, and multi-phase workloads whose
offered load is calibrated against a caller-supplied reference throughput.

Trace file format (UTF-8, LF):
    #rlstorage-trace v1 address_space=<bytes>
    arrival_us,op,offset,size        with op one of R|W
An optional `#desc <text>` line directly after the header carries the
free-form description so that write/read round-trips are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SECTOR_BYTES = 512
TRACE_HEADER_PREFIX = "#rlstorage-trace v1 address_space="

READ = "R"
WRITE = "W"

DEFAULT_ADDRESS_SPACE = 1 << 30
DEFAULT_REFERENCE_THROUGHPUT = 200_000_000.0  # bytes/s, offered-load calibration


class TraceError(ValueError):
    """Invalid trace contents or generation parameters."""


class TraceParseError(TraceError):
    """Malformed trace file; carries the 1-based line number when known."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class MissingHeaderError(TraceParseError):
    """The stream does not start with the trace header line."""


@dataclass(frozen=True, slots=True)
class IoRequest:
    """One block-level operation; the simulator's unit of work."""

    arrival_us: int
    op: str
    offset: int
    size: int

    def __post_init__(self):
        if self.op not in (READ, WRITE):
            raise TraceError(f"op must be R or W, got {self.op!r}")
        if self.arrival_us < 0:
            raise TraceError(f"arrival_us must be >= 0, got {self.arrival_us}")
        if self.offset < 0:
            raise TraceError(f"offset must be >= 0, got {self.offset}")
        if self.size <= 0:
            raise TraceError(f"size must be positive, got {self.size}")
        if self.size % SECTOR_BYTES != 0:
            raise TraceError(f"size must be a multiple of {SECTOR_BYTES}, got {self.size}")


@dataclass(frozen=True)
class Trace:
    """Header plus requests ordered by arrival time."""

    address_space_bytes: int
    requests: tuple[IoRequest, ...] = ()
    description: str = ""

    def __post_init__(self):
        if self.address_space_bytes <= 0:
            raise TraceError("address_space_bytes must be positive")
        if "\n" in self.description:
            raise TraceError("description must be a single line")
        last = -1
        for i, req in enumerate(self.requests):
            if req.arrival_us < last:
                raise TraceError(f"request {i} arrives out of order")
            last = req.arrival_us
            if req.offset + req.size > self.address_space_bytes:
                raise TraceError(
                    f"request {i} at offset {req.offset} size {req.size} "
                    f"exceeds address space {self.address_space_bytes}"
                )

    def __len__(self) -> int:
        return len(self.requests)


@dataclass(frozen=True)
class PhaseSpec:
    """One workload phase: a pattern run for a duration at a target intensity.

    `target_utilization` is the offered load as a fraction of the reference
    throughput passed to `gen_phased`.  `sequential_fraction` only matters for
    the mixed pattern (sequential is 1.0, random is 0.0 by definition).
    """

    duration_us: int
    pattern: str  # "sequential" | "random" | "mixed"
    block_size_bytes: int
    read_fraction: float
    target_utilization: float
    sequential_fraction: float = 0.5

    def __post_init__(self):
        if self.pattern not in ("sequential", "random", "mixed"):
            raise TraceError(f"unknown pattern {self.pattern!r}")
        if self.duration_us < 0:
            raise TraceError("duration_us must be >= 0")
        if self.block_size_bytes <= 0 or self.block_size_bytes % SECTOR_BYTES != 0:
            raise TraceError(f"block_size_bytes must be a positive multiple of {SECTOR_BYTES}")
        if not 0.0 <= self.read_fraction <= 1.0:
            raise TraceError("read_fraction must be in [0, 1]")
        if not 0.0 < self.target_utilization <= 1.0:
            raise TraceError("target_utilization must be in (0, 1]")
        if not 0.0 <= self.sequential_fraction <= 1.0:
            raise TraceError("sequential_fraction must be in [0, 1]")


def _check_block_size(block_size: int):
    if block_size <= 0 or block_size % SECTOR_BYTES != 0:
        raise TraceError(f"block_size must be a positive multiple of {SECTOR_BYTES}")


def gen_sequential(
    start_offset: int,
    count: int,
    block_size: int,
    inter_arrival_us: float,
    *,
    op: str = READ,
    address_space: int | None = None,
    description: str = "",
) -> Trace:
    """Back-to-back requests at a fixed cadence: offset i*block past start."""
    _check_block_size(block_size)
    if count < 1:
        raise TraceError("count must be >= 1")
    if start_offset % block_size != 0:
        raise TraceError("start_offset must be block_size aligned")
    end = start_offset + count * block_size
    if address_space is None:
        address_space = end
    elif end > address_space:
        raise TraceError(f"trace end {end} exceeds address space {address_space}")
    requests = tuple(
        IoRequest(round(i * inter_arrival_us), op, start_offset + i * block_size, block_size)
        for i in range(count)
    )
    return Trace(address_space, requests, description)


def _random_requests(rng, count, block_size, read_fraction, address_space, inter_arrival_us, t0):
    """Uniform draws over aligned slots; one offset draw then one op draw per request."""
    slots = address_space // block_size
    out = []
    for i in range(count):
        offset = int(rng.integers(0, slots)) * block_size
        op = READ if rng.random() < read_fraction else WRITE
        out.append(IoRequest(t0 + round(i * inter_arrival_us), op, offset, block_size))
    return out


def gen_random(
    address_space: int,
    count: int,
    block_size: int,
    read_fraction: float,
    inter_arrival_us: float,
    seed,
    *,
    description: str = "",
) -> Trace:
    """Uniform random aligned offsets; deterministic in seed."""
    _check_block_size(block_size)
    if count < 1:
        raise TraceError("count must be >= 1")
    if address_space < block_size:
        raise TraceError("address_space must be at least one block")
    if not 0.0 <= read_fraction <= 1.0:
        raise TraceError("read_fraction must be in [0, 1]")
    rng = np.random.default_rng(seed)
    requests = _random_requests(rng, count, block_size, read_fraction, address_space, inter_arrival_us, 0)
    return Trace(address_space, tuple(requests), description)


def phase_inter_arrival_us(phase: PhaseSpec, reference_throughput: float) -> float:
    """Inter-arrival spacing so offered bytes/s is target_utilization of the reference."""
    return phase.block_size_bytes / (phase.target_utilization * reference_throughput) * 1e6


def gen_phased(
    phases,
    seed,
    *,
    address_space: int = DEFAULT_ADDRESS_SPACE,
    reference_throughput: float = DEFAULT_REFERENCE_THROUGHPUT,
    description: str = "",
) -> Trace:
    """Concatenated phases with arrivals shifted by cumulative phase durations.

    Within each phase the inter-arrival time is set so the offered load
    approximates target_utilization * reference_throughput.  Sequential and
    mixed patterns continue a single offset cursor across requests (wrapping
    at the end of the address space); mixed requests continue the cursor with
    probability sequential_fraction and jump uniformly otherwise.
    """
    phases = list(phases)
    if not phases:
        raise TraceError("at least one phase is required")
    rng = np.random.default_rng(seed)
    requests: list[IoRequest] = []
    t0 = 0
    cursor = 0
    for phase in phases:
        if not isinstance(phase, PhaseSpec):
            raise TraceError(f"expected PhaseSpec, got {type(phase).__name__}")
        block = phase.block_size_bytes
        if address_space < block:
            raise TraceError("address_space must be at least one block")
        inter = phase_inter_arrival_us(phase, reference_throughput)
        count = int(phase.duration_us // inter)
        if phase.pattern == "random":
            requests.extend(
                _random_requests(rng, count, block, phase.read_fraction, address_space, inter, t0)
            )
        else:
            seq_fraction = 1.0 if phase.pattern == "sequential" else phase.sequential_fraction
            slots = address_space // block
            cursor -= cursor % block
            for i in range(count):
                if phase.pattern == "mixed" and rng.random() >= seq_fraction:
                    cursor = int(rng.integers(0, slots)) * block
                if cursor + block > address_space:
                    cursor = 0
                op = READ if rng.random() < phase.read_fraction else WRITE
                requests.append(IoRequest(t0 + round(i * inter), op, cursor, block))
                cursor += block
        t0 += phase.duration_us
    return Trace(address_space, tuple(requests), description)


def write_trace(trace: Trace) -> bytes:
    lines = [f"{TRACE_HEADER_PREFIX}{trace.address_space_bytes}"]
    if trace.description:
        lines.append(f"#desc {trace.description}")
    for req in trace.requests:
        lines.append(f"{req.arrival_us},{req.op},{req.offset},{req.size}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def read_trace(data: bytes | str) -> Trace:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    lines = data.split("\n")
    if not lines or not lines[0].startswith(TRACE_HEADER_PREFIX):
        raise MissingHeaderError("missing trace header line", line_no=1)
    try:
        address_space = int(lines[0][len(TRACE_HEADER_PREFIX):])
    except ValueError:
        raise TraceParseError("bad address_space in header", line_no=1) from None
    description = ""
    body_start = 1
    if len(lines) > 1 and lines[1].startswith("#desc "):
        description = lines[1][len("#desc "):]
        body_start = 2
    requests = []
    for idx in range(body_start, len(lines)):
        line = lines[idx].strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise TraceParseError(f"expected 4 fields, got {len(parts)}", line_no=idx + 1)
        try:
            arrival = int(parts[0])
            offset = int(parts[2])
            size = int(parts[3])
        except ValueError:
            raise TraceParseError("non-integer field", line_no=idx + 1) from None
        try:
            requests.append(IoRequest(arrival, parts[1], offset, size))
        except TraceError as exc:
            raise TraceParseError(str(exc), line_no=idx + 1) from None
    try:
        return Trace(address_space, tuple(requests), description)
    except TraceError as exc:
        raise TraceParseError(str(exc)) from None


def load_trace(path) -> Trace:
    with open(path, "rb") as fh:
        return read_trace(fh.read())


def save_trace(trace: Trace, path):
    with open(path, "wb") as fh:
        fh.write(write_trace(trace))
