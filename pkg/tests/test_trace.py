from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlstorage.trace import (
    DEFAULT_ADDRESS_SPACE,
    READ,
    SECTOR_BYTES,
    WRITE,
    IoRequest,
    MissingHeaderError,
    PhaseSpec,
    Trace,
    TraceParseError,
    gen_phased,
    gen_random,
    gen_sequential,
    phase_inter_arrival_us,
    read_trace,
    write_trace,
)


def test_request_validation():
    IoRequest(arrival_us=0, op=READ, offset=0, size=512)
    with pytest.raises(ValueError):
        IoRequest(arrival_us=-1, op=READ, offset=0, size=512)
    with pytest.raises(ValueError):
        IoRequest(arrival_us=0, op="X", offset=0, size=512)
    with pytest.raises(ValueError):
        IoRequest(arrival_us=0, op=READ, offset=0, size=100)  # not sector-sized
    with pytest.raises(ValueError):
        IoRequest(arrival_us=0, op=READ, offset=0, size=0)


def test_trace_requires_nondecreasing_arrivals():
    reqs = [IoRequest(10, READ, 0, 512), IoRequest(5, READ, 512, 512)]
    with pytest.raises(ValueError):
        Trace(address_space_bytes=1 << 20, requests=tuple(reqs))


def test_trace_rejects_out_of_bounds_request():
    req = IoRequest(0, READ, (1 << 20) - 512, 4096)
    with pytest.raises(ValueError):
        Trace(address_space_bytes=1 << 20, requests=(req,))


def test_roundtrip_preserves_everything():
    trace = gen_random(1 << 22, 50, 4096, 0.7, 100, seed=7)
    again = read_trace(write_trace(trace))
    assert again.address_space_bytes == trace.address_space_bytes
    assert again.requests == trace.requests
    assert again.description == trace.description


def test_description_line_roundtrips():
    trace = Trace(1 << 20, (IoRequest(0, WRITE, 0, 512),), description="hand built")
    again = read_trace(write_trace(trace))
    assert again.description == "hand built"


def test_missing_header_rejected():
    with pytest.raises(MissingHeaderError):
        read_trace("0,R,0,512\n")


def test_parse_error_carries_line_number():
    text = "#rlstorage-trace v1 address_space=1048576\n0,R,0,512\nnot,a,line\n"
    with pytest.raises(TraceParseError) as err:
        read_trace(text)
    assert err.value.line_no == 3


def test_parse_rejects_bad_size():
    text = "#rlstorage-trace v1 address_space=1048576\n0,R,0,100\n"
    with pytest.raises(TraceParseError):
        read_trace(text)


def test_parse_rejects_negative_offset():
    text = "#rlstorage-trace v1 address_space=1048576\n0,R,-512,512\n"
    with pytest.raises(TraceParseError) as err:
        read_trace(text)
    assert err.value.line_no == 2


def test_sequential_addresses_advance_by_block():
    trace = gen_sequential(8192, 10, 4096, 50, address_space=1 << 20)
    offsets = [r.offset for r in trace.requests]
    assert offsets == [8192 + i * 4096 for i in range(10)]
    assert all(r.op == READ for r in trace.requests)
    assert [r.arrival_us for r in trace.requests] == [i * 50 for i in range(10)]


def test_sequential_rejects_overrun():
    with pytest.raises(ValueError):
        gen_sequential(4096 * 3, 6, 4096, 1, address_space=4096 * 4)


def test_random_deterministic_and_in_bounds():
    a = gen_random(1 << 24, 200, 4096, 0.8, 20, seed=3)
    b = gen_random(1 << 24, 200, 4096, 0.8, 20, seed=3)
    assert a.requests == b.requests
    c = gen_random(1 << 24, 200, 4096, 0.8, 20, seed=4)
    assert a.requests != c.requests
    for r in a.requests:
        assert 0 <= r.offset
        assert r.offset + r.size <= 1 << 24
        assert r.offset % SECTOR_BYTES == 0


def test_random_read_fraction_extremes():
    all_reads = gen_random(1 << 24, 100, 4096, 1.0, 10, seed=1)
    assert all(r.op == READ for r in all_reads.requests)
    all_writes = gen_random(1 << 24, 100, 4096, 0.0, 10, seed=1)
    assert all(r.op == WRITE for r in all_writes.requests)


def test_phase_inter_arrival_formula():
    # one 8 KiB request per interval at 10% of a 200 MB/s reference device
    phase = PhaseSpec(duration_us=1000, pattern="random", block_size_bytes=8192,
                      read_fraction=1.0, target_utilization=0.1)
    got = phase_inter_arrival_us(phase, reference_throughput=2e8)
    assert got == pytest.approx(8192 / (0.1 * 2e8) * 1e6)


def test_phased_respects_phase_boundaries():
    phases = (
        PhaseSpec(duration_us=10_000, pattern="sequential", block_size_bytes=4096,
                  read_fraction=1.0, target_utilization=0.5),
        PhaseSpec(duration_us=10_000, pattern="random", block_size_bytes=8192,
                  read_fraction=0.5, target_utilization=0.5),
    )
    trace = gen_phased(phases, seed=11, address_space=1 << 24)
    first = [r for r in trace.requests if r.arrival_us < 10_000]
    second = [r for r in trace.requests if r.arrival_us >= 10_000]
    assert first and second
    assert all(r.size == 4096 for r in first)
    assert all(r.size == 8192 for r in second)
    assert all(r.arrival_us < 20_000 for r in trace.requests)


def test_phased_mixed_pattern_has_both_ops():
    phases = (PhaseSpec(duration_us=200_000, pattern="mixed", block_size_bytes=4096,
                        read_fraction=0.7, target_utilization=0.5),)
    trace = gen_phased(phases, seed=5, address_space=1 << 24)
    ops = {r.op for r in trace.requests}
    assert ops == {READ, WRITE}


def test_random_read_fraction_converges():
    trace = gen_random(1 << 28, 10_000, 4096, 0.5, 10, seed=42)
    reads = sum(1 for r in trace.requests if r.op == READ)
    assert 4500 <= reads <= 5500


def test_single_random_phase_reduces_to_gen_random():
    phase = PhaseSpec(duration_us=100_000, pattern="random", block_size_bytes=4096,
                      read_fraction=0.7, target_utilization=0.5)
    phased = gen_phased([phase], seed=9, address_space=1 << 24)
    inter = phase_inter_arrival_us(phase, 2e8)
    plain = gen_random(1 << 24, len(phased.requests), 4096, 0.7, inter, seed=9)
    assert phased.requests == plain.requests


def test_zero_duration_phase_contributes_nothing():
    empty = PhaseSpec(duration_us=0, pattern="random", block_size_bytes=4096,
                      read_fraction=1.0, target_utilization=0.5)
    real = PhaseSpec(duration_us=1000, pattern="random", block_size_bytes=4096,
                     read_fraction=1.0, target_utilization=0.5)
    with_empty = gen_phased([empty, real], seed=1)
    alone = gen_phased([real], seed=1)
    assert with_empty.requests == alone.requests


def test_heavier_phase_offers_more_load():
    light = PhaseSpec(duration_us=500_000, pattern="random", block_size_bytes=4096,
                      read_fraction=1.0, target_utilization=0.2)
    heavy = PhaseSpec(duration_us=500_000, pattern="random", block_size_bytes=4096,
                      read_fraction=1.0, target_utilization=0.8)
    trace = gen_phased([light, heavy], seed=2)
    first = sum(r.size for r in trace.requests if r.arrival_us < 500_000)
    second = sum(r.size for r in trace.requests if r.arrival_us >= 500_000)
    assert second > 3 * first


def test_empty_phase_list_rejected():
    with pytest.raises(ValueError):
        gen_phased([], seed=0)


@settings(max_examples=50, deadline=None)
@given(st.lists(
    st.tuples(
        st.integers(min_value=0, max_value=10_000),
        st.sampled_from([READ, WRITE]),
        st.integers(min_value=0, max_value=255),
        st.integers(min_value=1, max_value=16),
    ),
    max_size=30,
))
def test_roundtrip_property(raw):
    reqs = sorted(
        (IoRequest(t, op, sector * SECTOR_BYTES, n * SECTOR_BYTES)
         for t, op, sector, n in raw),
        key=lambda r: r.arrival_us,
    )
    trace = Trace(DEFAULT_ADDRESS_SPACE, tuple(reqs))
    assert read_trace(write_trace(trace)).requests == trace.requests
