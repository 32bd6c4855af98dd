"""
Tests for the fifteen spectral statistics and the feature table.
"""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from feature_extractor import (
    FEATURE_NAMES,
    FLAG_COLUMN,
    META_COLUMNS,
    FeatureTable,
    build_feature_table,
    compute_statistics,
    extract_features,
    featurize_segments,
)
from pipeline_errors import DataError
from signal_dataset import Partition
from sliding_window import segment_signal

SCALE_FREE = ("kurtosis", "skewness", "shape_factor", "clearance_factor", "crest_factor")

magnitudes = arrays(
    np.float64,
    st.integers(min_value=4, max_value=200),
    elements=st.floats(min_value=1e-3, max_value=1e3, allow_nan=False, allow_infinity=False),
)


def oracle(values):
    """Statistics straight from their definitions with python lists and scipy."""
    x = sorted(float(v) for v in values)
    n = len(x)

    def quartile(p):
        position = n * p
        if position == int(position):
            k = int(position)
            return (x[k - 1] + x[k]) / 2
        return x[math.floor(position)]

    mean = sum(x) / n
    std = math.sqrt(sum((v - mean) ** 2 for v in x) / n)
    rms = math.sqrt(sum(v * v for v in x) / n)
    sra = (sum(math.sqrt(abs(v)) for v in x) / n) ** 2
    peak = max(abs(v) for v in x)
    return {
        "mean": mean,
        "median": float(np.median(x)),
        "low_quartile": quartile(0.25),
        "upper_quartile": quartile(0.75),
        "min": x[0],
        "max": x[-1],
        "iqr": quartile(0.75) - quartile(0.25),
        "std": std,
        "rms": rms,
        "sra": sra,
        "kurtosis": float(stats.kurtosis(x, fisher=False, bias=True)),
        "skewness": float(stats.skew(x, bias=True)),
        "shape_factor": rms / (sum(abs(v) for v in x) / n),
        "clearance_factor": peak / sra,
        "crest_factor": peak / rms,
    }


def test_hand_computed_sequence():
    values, degenerate = compute_statistics(np.array([1.0, 2, 3, 4, 5]))

    assert not degenerate
    assert values["mean"] == 3
    assert values["median"] == 3
    assert values["min"] == 1 and values["max"] == 5
    assert values["low_quartile"] == 2 and values["upper_quartile"] == 4
    assert values["iqr"] == 2
    assert math.isclose(values["std"], math.sqrt(2))
    assert math.isclose(values["rms"], math.sqrt(11))


def test_even_length_quartiles_average_two_order_statistics():
    values, _ = compute_statistics(np.arange(1.0, 9.0))
    assert values["low_quartile"] == 2.5
    assert values["upper_quartile"] == 6.5


def test_constant_sequence_is_flagged():
    values, degenerate = compute_statistics(np.full(4, 2.0))

    assert degenerate
    assert values["std"] == 0
    assert values["kurtosis"] == 0 and values["skewness"] == 0
    assert values["shape_factor"] == 1
    assert values["crest_factor"] == 1
    assert values["clearance_factor"] == pytest.approx(1.0)


def test_all_zero_sequence_is_finite_and_flagged():
    values, degenerate = compute_statistics(np.zeros(8))
    assert degenerate
    assert all(math.isfinite(v) for v in values.values())


def test_too_short_is_rejected():
    with pytest.raises(DataError, match="at least 4"):
        compute_statistics(np.array([1.0, 2.0, 3.0]))


def test_matches_direct_formulas():
    rng = np.random.default_rng(99)
    for _ in range(1000):
        x = np.abs(rng.standard_normal(int(rng.integers(4, 300)))) + 1e-3
        values, _ = compute_statistics(x)
        expected = oracle(x)
        for name in FEATURE_NAMES:
            assert math.isclose(values[name], expected[name], rel_tol=1e-12, abs_tol=1e-12), name


@given(x=magnitudes)
def test_order_and_rms_identities(x):
    values, degenerate = compute_statistics(x)

    assert values["min"] <= values["low_quartile"] <= values["median"] <= values["upper_quartile"] <= values["max"]
    assert values["iqr"] >= 0 and values["std"] >= 0
    assert math.isclose(values["rms"] ** 2, values["mean"] ** 2 + values["std"] ** 2, rel_tol=1e-9)
    assert values["crest_factor"] >= 1 - 1e-12
    assert values["shape_factor"] >= 1 - 1e-12


@given(x=magnitudes, c=st.floats(min_value=1e-2, max_value=1e2))
def test_scale_equivariance(x, c):
    base, base_flag = compute_statistics(x)
    scaled, scaled_flag = compute_statistics(x * c)
    if base_flag or scaled_flag:
        return
    for name in FEATURE_NAMES:
        expected = base[name] if name in SCALE_FREE else base[name] * c
        assert math.isclose(scaled[name], expected, rel_tol=1e-9, abs_tol=1e-9), name


@given(x=magnitudes, seed=st.integers(min_value=0, max_value=1000))
def test_permutation_invariance(x, seed):
    shuffled = np.random.default_rng(seed).permutation(x)
    base, _ = compute_statistics(x)
    permuted, _ = compute_statistics(shuffled)
    for name in FEATURE_NAMES:
        assert math.isclose(base[name], permuted[name], rel_tol=1e-9, abs_tol=1e-12), name


def test_empty_table_keeps_schema():
    table = build_feature_table([])
    assert len(table) == 0
    assert table.feature_columns == list(FEATURE_NAMES)
    assert list(table.frame.columns) == [*META_COLUMNS, *FEATURE_NAMES, FLAG_COLUMN]


def test_duplicate_segment_is_rejected():
    vector = extract_features(np.arange(1.0, 9.0))
    with pytest.raises(DataError, match="duplicate"):
        build_feature_table([vector, vector])


def test_featurize_segments(tmp_path, make_record):
    record = make_record("rec-1", length=1024, seed=5)
    segments = segment_signal(record, 256, Partition.TRAIN)

    table = featurize_segments(segments, workers=2, dump_dir=tmp_path / "spectra")

    assert len(table) == 4
    assert table.keys() == [("rec-1", i) for i in range(4)]
    assert set(table.frame["partition"]) == {"train"}
    assert len(list((tmp_path / "spectra").iterdir())) == 4
    assert np.all(np.isfinite(table.matrix()))


def test_feature_table_csv_round_trip(tmp_path, make_record):
    segments = segment_signal(make_record("rec-2", length=512, seed=1), 128, Partition.TEST)
    table = featurize_segments(segments)

    loaded = FeatureTable.read_csv(table.to_csv(tmp_path / "features.csv"))

    assert loaded.feature_columns == table.feature_columns
    np.testing.assert_array_equal(loaded.matrix(), table.matrix())
    assert loaded.keys() == table.keys()


def test_rounding_level_spread_counts_as_constant():
    # mean rounds to 1.0, leaving a spread of half an ulp
    values, degenerate = compute_statistics(np.array([1.0, 1.0 + 2.0 ** -52, 1.0, 1.0]))

    assert 0 < values["std"] < 1e-15
    assert degenerate
    assert values["kurtosis"] == 0 and values["skewness"] == 0
