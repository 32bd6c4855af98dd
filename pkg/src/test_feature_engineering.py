"""
Tests for feature selection, group aggregation and crosses.
"""

import logging

import numpy as np
import pandas as pd
import pytest

from feature_engineering import (
    AsfeConfig,
    CrossPlan,
    aggregate_column,
    apply_aggregation,
    build_crosses,
    expected_cross_count,
    fit_aggregation,
    rank_features,
    run_asfe,
    select_top_k,
)
from feature_extractor import FEATURE_NAMES, FeatureTable
from gradient_boosting import GbtHyperParams
from pipeline_errors import ConfigError, DataError, SchemaError
from signal_dataset import get_task

BINARY = get_task("binary")
PROBE = GbtHyperParams(num_rounds=10)


def _table(n, seed=0, partition="train", prefix="r", determining=None, pressures=(10.0, 9.0, 6.0, 4.0)):
    rng = np.random.default_rng(seed)
    cavitating = np.arange(n) % 2 == 1
    frame = {
        "parent_id": [f"{prefix}{i:03d}" for i in range(n)],
        "window_index": np.zeros(n, dtype=int),
        "partition": [partition] * n,
        "pressure": [pressures[i % len(pressures)] for i in range(n)],
        "opening": [(100.0, 50.0, 5.0)[i % 3] for i in range(n)],
        "label": np.where(cavitating, "ChokedFlowCavitation", "NoFlow"),
    }
    for name in FEATURE_NAMES:
        frame[name] = rng.uniform(1.0, 2.0, n)
    if determining:
        frame[determining] = cavitating * 10.0 + rng.uniform(0.0, 0.1, n)
    return FeatureTable(pd.DataFrame(frame), list(FEATURE_NAMES))


def _crafted(columns, pressures, openings):
    n = len(pressures)
    frame = pd.DataFrame({
        "parent_id": [f"c{i}" for i in range(n)],
        "window_index": range(n),
        "partition": ["train"] * n,
        "pressure": pressures,
        "opening": openings,
        "label": ["NoFlow"] * n,
        **columns,
    })
    return FeatureTable(frame, list(columns))


def test_determining_feature_is_ranked_first():
    table = _table(60, determining="kurtosis")
    ranking = rank_features(table, PROBE, BINARY)

    assert ranking[0][0] == "kurtosis"
    assert select_top_k(table, 5, PROBE, BINARY)[0] == "kurtosis"
    assert len(ranking) == len(FEATURE_NAMES)


def test_top_k_out_of_range():
    with pytest.raises(ConfigError):
        select_top_k(_table(20), 16, PROBE, BINARY)


def test_aggregates_match_hand_arithmetic():
    table = _crafted({"mean": [1.0, 3.0, 5.0, 7.0]}, [10.0, 10.0, 4.0, 4.0], [100.0, 50.0, 100.0, 50.0])
    plan = fit_aggregation(table, ["mean"], AsfeConfig())
    augmented, fallbacks = apply_aggregation(table, plan)

    frame = augmented.frame
    assert fallbacks == 0
    # median by pressure (2, 6) and by opening (3, 5)
    assert list(frame[aggregate_column("mean", "median")]) == [2.5, 3.5, 4.5, 5.5]
    # max by pressure (3, 7) and by opening (5, 7)
    assert list(frame[aggregate_column("mean", "max")]) == [4.0, 5.0, 6.0, 7.0]
    # min by pressure (1, 5) and by opening (1, 3)
    assert list(frame[aggregate_column("mean", "min")]) == [1.0, 2.0, 3.0, 4.0]
    assert list(frame[aggregate_column("mean", "mean")]) == [2.5, 3.5, 4.5, 5.5]
    assert plan.global_values[("mean", "max")] == 7.0


def test_crosses_match_direct_arithmetic():
    table = _crafted({"a": [1.0, 4.0, 0.0], "b": [2.0, 2.0, 0.0]}, [10.0, 10.0, 10.0], [5.0, 5.0, 5.0])
    crossed, clamps = build_crosses(table, CrossPlan(sources=("a", "b")))

    frame = crossed.frame
    assert crossed.feature_columns[2:] == ["ratio(a,b)", "ratio(b,a)", "diff(a,b)", "diff(b,a)"]
    assert list(frame["ratio(a,b)"]) == [0.5, 2.0, 0.0]
    assert list(frame["ratio(b,a)"]) == [2.0, 0.5, 0.0]
    assert list(frame["diff(a,b)"]) == [-1.0, 2.0, 0.0]
    assert list(frame["diff(b,a)"]) == [1.0, -2.0, 0.0]
    # both ratios of the zero row
    assert clamps == 2


@pytest.mark.parametrize("k", range(5, 11))
def test_column_count_identities(k):
    train, test = _table(40, seed=k), _table(12, seed=100 + k, partition="test", prefix="t")
    train_out, test_out, report = run_asfe(train, test, AsfeConfig(k=k, probe_params=PROBE), BINARY)

    assert report.aggregation_columns == 4 * k
    assert report.cross_columns == expected_cross_count(k) == 2 * (5 * k) * (5 * k - 1)
    assert report.total_columns == len(FEATURE_NAMES) + 4 * k + expected_cross_count(k)
    assert train_out.feature_columns == test_out.feature_columns
    assert len(train_out) == 40 and len(test_out) == 12
    assert np.all(np.isfinite(train_out.matrix()))


def test_cross_count_discrepancy_is_reported(caplog):
    train, test = _table(30), _table(10, partition="test", prefix="t")
    with caplog.at_level(logging.INFO, logger="feature_engineering"):
        _, _, at_five = run_asfe(train, test, AsfeConfig(k=5, probe_params=PROBE), BINARY)
        _, _, at_six = run_asfe(train, test, AsfeConfig(k=6, probe_params=PROBE), BINARY)

    assert at_five.cross_columns == at_five.printed_cross_count == 1200
    assert at_five.note == ""
    assert at_six.cross_columns == 1740 and at_six.printed_cross_count == 1300
    assert "1300" in at_six.note and "1300" in caplog.text
    assert at_six.to_dict()["formula_cross_columns"] == 1740


def test_test_rows_never_reach_the_fit():
    train = _table(40, seed=1)
    test = _table(20, seed=2, partition="test", prefix="t")
    combined = FeatureTable(pd.concat([train.frame, test.frame], ignore_index=True), list(FEATURE_NAMES))
    selected = list(FEATURE_NAMES[:5])

    from_train = fit_aggregation(train, selected, AsfeConfig())
    from_combined = fit_aggregation(combined, selected, AsfeConfig())

    assert from_train.lookups == from_combined.lookups
    assert from_train.global_values == from_combined.global_values
    assert rank_features(train, PROBE, BINARY) == rank_features(combined, PROBE, BINARY)


def test_unseen_level_falls_back_or_fails_in_strict_mode():
    train = _table(24, pressures=(10.0, 4.0))
    test = _table(6, partition="test", prefix="t", pressures=(9.0,))
    plan = fit_aggregation(train, ["mean"], AsfeConfig())

    augmented, fallbacks = apply_aggregation(test, plan)
    assert fallbacks == 6 * len(plan.ops)
    expected = 0.5 * (plan.global_values[("mean", "max")] + plan.lookups[("mean", "max", "opening")][100.0])
    assert augmented.frame[aggregate_column("mean", "max")].iloc[0] == expected

    with pytest.raises(DataError, match="not seen"):
        apply_aggregation(test, plan, strict=True)


def test_declared_level_without_training_rows(caplog):
    train = _table(24, pressures=(10.0, 4.0))
    levels = {"pressure": [10.0, 9.0, 6.0, 4.0], "opening": [100.0, 50.0, 5.0]}

    with caplog.at_level(logging.WARNING):
        fit_aggregation(train, ["mean"], AsfeConfig(), levels)
    assert "pressure=9" in caplog.text

    with pytest.raises(DataError, match="no training rows"):
        fit_aggregation(train, ["mean"], AsfeConfig(strict=True), levels)


def test_run_asfe_rejects_overlap_and_schema_mismatch():
    train = _table(20)
    with pytest.raises(DataError, match="both partitions"):
        run_asfe(train, _table(20, partition="test"), AsfeConfig(probe_params=PROBE), BINARY)

    narrow = FeatureTable(train.frame.drop(columns=["mean"]), [n for n in FEATURE_NAMES if n != "mean"])
    with pytest.raises(SchemaError):
        run_asfe(train, narrow, AsfeConfig(probe_params=PROBE), BINARY)


def test_config_validation():
    with pytest.raises(ConfigError):
        AsfeConfig(k=4).validate()
    with pytest.raises(ConfigError):
        AsfeConfig.from_dict({"k": 5, "ops": ["sum"]})

    config = AsfeConfig.from_dict({"k": 7, "probe_params": {"num_rounds": 5}})
    assert config.k == 7 and config.probe_params.num_rounds == 5
    assert config.to_dict()["apply_ops"] == ["median", "mean", "max", "min"]


def test_aggregates_are_constant_within_each_condition_cell():
    table = _table(60, seed=3)
    selected = list(FEATURE_NAMES[:3])
    augmented, _ = apply_aggregation(table, fit_aggregation(table, selected, AsfeConfig()))

    frame = augmented.frame
    columns = [aggregate_column(name, op) for name in selected for op in ("median", "mean", "max", "min")]
    per_cell = frame.groupby(["pressure", "opening"])[columns].nunique()
    # 4 pressures x 3 openings, every cell populated
    assert len(per_cell) == 12
    assert (per_cell == 1).all().all()
    assert frame[aggregate_column(selected[0], "mean")].nunique() > 1


def test_crosses_are_antisymmetric_on_random_tables():
    rng = np.random.default_rng(21)
    for _ in range(20):
        n = int(rng.integers(1, 50))
        columns = {name: rng.uniform(0.5, 20.0, n) for name in ("a", "b", "c")}
        table = _crafted(columns, [10.0] * n, [5.0] * n)

        crossed, clamps = build_crosses(table, CrossPlan(sources=("a", "b", "c")))

        frame = crossed.frame
        assert clamps == 0
        for x, y in (("a", "b"), ("a", "c"), ("b", "c")):
            np.testing.assert_array_equal(frame[f"diff({x},{y})"], -frame[f"diff({y},{x})"])
            np.testing.assert_allclose(frame[f"ratio({x},{y})"] * frame[f"ratio({y},{x})"], 1.0, rtol=1e-12)
