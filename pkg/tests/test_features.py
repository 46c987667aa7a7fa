from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlstorage.features import (
    DEFAULT_BOUNDS,
    DEFAULT_SCHEME,
    FEATURE_NAMES,
    ZERO_FEATURES,
    BinningScheme,
    FeatureBounds,
    FeatureError,
    FeatureVector,
    bin_value,
    decode_state,
    discretize,
    encode_bins,
    extract,
    normalize,
)
from conftest import make_record
from rlstorage.trace import WRITE


def test_feature_order_is_fixed():
    assert FEATURE_NAMES == (
        "mean_request_bytes",
        "read_fraction",
        "sequentiality",
        "arrival_rate_per_s",
        "mean_latency_us",
        "cache_hit_rate",
        "utilization",
    )
    vec = FeatureVector(1, 2, 3, 4, 5, 6, 7)
    assert vec.as_tuple() == (1, 2, 3, 4, 5, 6, 7)


def test_empty_window_carries_previous():
    prev = FeatureVector(4096, 1.0, 0.5, 100.0, 50.0, 0.2, 0.3)
    assert extract([], 1000.0, previous=prev) is prev
    assert extract([], 1000.0) is ZERO_FEATURES


def test_basic_aggregates():
    records = [
        make_record(0, 0, size=4096),
        make_record(100, 4096, size=8192, op=WRITE),
    ]
    vec = extract(records, 10_000.0)
    assert vec.mean_request_bytes == pytest.approx(6144)
    assert vec.read_fraction == pytest.approx(0.5)
    assert vec.arrival_rate_per_s == pytest.approx(2 / 0.01)


def test_sequentiality_counts_adjacent_pairs():
    # 0..4095 then 4096..8191 is adjacent; jump to 1 MiB is not
    records = [
        make_record(0, 0),
        make_record(10, 4096),
        make_record(20, 1 << 20),
    ]
    vec = extract(records, 1000.0)
    assert vec.sequentiality == pytest.approx(1 / 2)
    assert extract(records[:1], 1000.0).sequentiality == 0.0


def test_utilization_merges_overlapping_service():
    records = [
        make_record(0, 0, submit_us=0.0, complete_us=400.0),
        make_record(0, 8192, submit_us=200.0, complete_us=600.0),  # overlaps
        make_record(0, 1 << 20, submit_us=800.0, complete_us=900.0),
    ]
    vec = extract(records, 1000.0)
    assert vec.utilization == pytest.approx((600 + 100) / 1000)


def test_cache_hits_do_not_count_as_busy():
    records = [make_record(0, 0, submit_us=0.0, complete_us=5.0, cache_hit=True)]
    vec = extract(records, 1000.0)
    assert vec.utilization == 0.0
    assert vec.cache_hit_rate == 1.0


def test_normalize_clips_to_unit_box():
    vec = FeatureVector(1 << 30, 0.5, 2.0, -5.0, 50_000.0, 1.0, 0.25)
    out = normalize(vec, DEFAULT_BOUNDS)
    assert out.shape == (7,)
    assert out[0] == 1.0  # clipped high
    assert out[3] == 0.0  # clipped low
    assert out[1] == pytest.approx(0.5)
    assert out[4] == pytest.approx(0.5)
    assert np.all(out >= 0) and np.all(out <= 1)


def test_default_scheme_has_81_states():
    assert DEFAULT_SCHEME.state_count() == 81
    assert DEFAULT_SCHEME.radices == (3, 3, 3, 3)


def test_bin_value_edge_behavior():
    edges = (0.33, 0.66)
    assert bin_value(0.0, edges) == 0
    assert bin_value(0.329, edges) == 0
    assert bin_value(0.33, edges) == 1  # edges are lower-inclusive on the right bin
    assert bin_value(0.66, edges) == 2
    assert bin_value(5.0, edges) == 2


def test_encode_first_feature_most_significant():
    assert encode_bins((1, 0, 0, 0), (3, 3, 3, 3)) == 27
    assert encode_bins((0, 0, 0, 1), (3, 3, 3, 3)) == 1
    assert encode_bins((2, 2, 2, 2), (3, 3, 3, 3)) == 80


def test_encode_rejects_out_of_range_bin():
    with pytest.raises(FeatureError):
        encode_bins((3, 0), (3, 3))
    with pytest.raises(FeatureError):
        decode_state(81, (3, 3, 3, 3))


def test_discretize_uses_scheme_features():
    vec = FeatureVector(0, 0, 0.9, 0, 0, 0.1, 0.5)
    # bins: sequentiality 2, read_fraction 0, utilization 1, hit 0
    assert discretize(vec, DEFAULT_SCHEME) == encode_bins((2, 0, 1, 0), (3, 3, 3, 3))


def test_scheme_validation():
    with pytest.raises(FeatureError):
        BinningScheme(("no_such",), ((0.5,),))
    with pytest.raises(FeatureError):
        BinningScheme(("sequentiality",), ((0.6, 0.4),))  # not increasing
    with pytest.raises(FeatureError):
        FeatureBounds((0.0,) * 7, (0.0,) * 7)  # min == max


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_encode_decode_roundtrip(data):
    radices = tuple(data.draw(st.lists(st.integers(2, 5), min_size=1, max_size=5)))
    bins = tuple(data.draw(st.integers(0, r - 1)) for r in radices)
    state = encode_bins(bins, radices)
    assert decode_state(state, radices) == bins
    count = 1
    for r in radices:
        count *= r
    assert 0 <= state < count
