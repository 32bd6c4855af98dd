"""
Tests for manifests, signal codecs, tasks and the record-level split.
"""

import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from generate_synthetic_data import BENCH_COUNTS, FULL_SIGNAL_LENGTH, SynthSpec, SyntheticDatasetGenerator
from pipeline_errors import ConfigError, DataError
from signal_dataset import (
    FlowState,
    Partition,
    get_task,
    load_manifest,
    load_records,
    read_signal,
    split_records,
    write_signal,
)


def _write_manifest(tmp_path, entries, **overrides):
    document = {
        "codec": "f32le",
        "sample_rate": 1000.0,
        "signal_length": 16,
        "pressure_levels": [10, 9, 6, 4],
        "opening_levels": [100, 90, 75, 50, 25, 10, 5],
        "entries": entries,
        **overrides,
    }
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(document))
    return path


def _signal_file(tmp_path, name, samples, codec="f32le"):
    path = tmp_path / name
    write_signal(path, np.asarray(samples, dtype=np.float64), codec)
    return name


def _planned_manifest(counts, length):
    return SyntheticDatasetGenerator(SynthSpec(counts=dict(counts), signal_length=length)).manifest(Path("signals"))


def test_load_manifest_and_records(tmp_path):
    name = _signal_file(tmp_path, "a.f32le", np.arange(16))
    path = _write_manifest(tmp_path, [
        {"id": "a", "path": name, "upstream_pressure": 10, "valve_opening": 50, "label": "NoFlow"},
    ])

    manifest = load_manifest(path)
    records = load_records(manifest)

    assert manifest.label_counts() == {"NoFlow": 1}
    assert records[0].id == "a"
    assert records[0].label == FlowState.NO_FLOW
    np.testing.assert_array_equal(records[0].samples, np.arange(16))


def test_manifest_rejects_unknown_label(tmp_path):
    name = _signal_file(tmp_path, "a.f32le", np.zeros(16))
    path = _write_manifest(tmp_path, [
        {"id": "a", "path": name, "upstream_pressure": 10, "valve_opening": 50, "label": "Boiling"},
    ])
    with pytest.raises(DataError, match="Boiling"):
        load_manifest(path)


def test_manifest_rejects_undeclared_pressure(tmp_path):
    name = _signal_file(tmp_path, "a.f32le", np.zeros(16))
    path = _write_manifest(tmp_path, [
        {"id": "a", "path": name, "upstream_pressure": 7, "valve_opening": 50, "label": "NoFlow"},
    ])
    with pytest.raises(DataError, match="pressure"):
        load_manifest(path)


def test_manifest_reports_missing_file(tmp_path):
    path = _write_manifest(tmp_path, [
        {"id": "a", "path": "missing.f32le", "upstream_pressure": 10, "valve_opening": 50, "label": "NoFlow"},
    ])
    with pytest.raises(DataError, match="missing signal"):
        load_manifest(path)
    assert load_manifest(path, check_files=False).entries[0].id == "a"


def test_malformed_manifest_is_a_data_error(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text("{not json")
    with pytest.raises(DataError) as excinfo:
        load_manifest(path)
    assert excinfo.value.exit_code == 3


def test_length_mismatch_is_rejected(tmp_path):
    name = _signal_file(tmp_path, "a.f32le", np.zeros(15))
    path = _write_manifest(tmp_path, [
        {"id": "a", "path": name, "upstream_pressure": 10, "valve_opening": 50, "label": "NoFlow"},
    ])
    with pytest.raises(DataError, match="15 samples"):
        load_records(load_manifest(path))


def test_non_finite_sample_names_its_index(tmp_path):
    samples = np.zeros(16)
    samples[5] = np.nan
    name = _signal_file(tmp_path, "a.csv", samples, codec="csv")
    path = _write_manifest(tmp_path, [
        {"id": "a", "path": name, "upstream_pressure": 10, "valve_opening": 50, "label": "NoFlow"},
    ], codec="csv")
    with pytest.raises(DataError, match="index 5"):
        load_records(load_manifest(path))


def test_csv_codec_is_lossless(tmp_path):
    samples = np.random.default_rng(0).standard_normal(32)
    write_signal(tmp_path / "x.csv", samples, "csv")
    np.testing.assert_array_equal(read_signal(tmp_path / "x.csv", "csv"), samples)


def test_task_mappings():
    binary = get_task("binary")
    four = get_task("four_class")
    five = get_task("five_class")

    assert binary.classes == ("NoCavitation", "Cavitation")
    assert binary.class_of("IncipientCavitation") == "Cavitation"
    assert binary.class_of("TurbulentFlow") == "NoCavitation"
    assert four.class_of("NoFlow") == "NonCavitation"
    assert four.class_of("ChokedFlowCavitation") == "ChokedFlowCavitation"
    assert len(five.classes) == 5
    assert list(binary.encode(["NoFlow", "ConstantCavitation"])) == [0, 1]

    with pytest.raises(ConfigError):
        get_task("three_class")


def test_bench_split_counts():
    manifest = _planned_manifest(BENCH_COUNTS, FULL_SIGNAL_LENGTH)
    split = split_records(manifest, 0.8, seed=11)

    assert split.counts() == {"train": 284, "test": 72}


@given(seed=st.integers(min_value=0, max_value=2 ** 32 - 1))
def test_split_is_stratified_and_disjoint(seed):
    manifest = _planned_manifest(BENCH_COUNTS, 64)
    split = split_records(manifest, 0.8, seed)

    train, test = set(split.ids(Partition.TRAIN)), set(split.ids(Partition.TEST))
    assert not train & test
    assert len(train) + len(test) == sum(BENCH_COUNTS.values())
    for label, count in BENCH_COUNTS.items():
        ids = {entry.id for entry in manifest.entries if entry.label.value == label}
        assert int(count * 0.8) <= len(ids & train) <= int(count * 0.8) + 1


def test_split_is_deterministic_per_seed():
    manifest = _planned_manifest(BENCH_COUNTS, 64)

    first = split_records(manifest, 0.8, seed=5)
    again = split_records(manifest, 0.8, seed=5)
    other = split_records(manifest, 0.8, seed=6)

    assert first.assignments == again.assignments
    assert first.assignments != other.assignments


def test_split_rejects_bad_fraction(make_record):
    records = [make_record(f"r{i}") for i in range(4)]
    with pytest.raises(ConfigError):
        split_records(records, 1.0, seed=0)


def test_split_of_single_record_leaves_a_partition_empty(make_record):
    with pytest.raises(DataError, match="empty"):
        split_records([make_record("only")], 0.8, seed=0)
