"""
Test script to verify synthetic dataset generation.
Generates a small dataset, checks labels, operating conditions and
reproducibility, and can be run directly to print a summary.
"""

import json

import numpy as np
import pytest

from generate_synthetic_data import (
    DEFAULT_SIGNATURES,
    FULL_SIGNAL_LENGTH,
    OPENING_LEVELS,
    PRESSURE_LEVELS,
    SynthSpec,
    SyntheticDatasetGenerator,
    generate,
    write_dataset,
)
from pipeline_errors import ConfigError
from signal_dataset import FlowState, load_manifest, load_records
from spectrum import magnitude_spectrum


def _small_spec(**overrides):
    values = {"counts": {state.value: 3 for state in FlowState}, "signal_length": 4096, "seed": 1}
    values.update(overrides)
    return SynthSpec(**values)


def test_data_generation():
    """Records carry the requested labels, declared levels and finite samples."""
    records, manifest = generate(_small_spec())

    print(f"\n   ✓ Generated {len(records)} records")
    assert len(records) == 15
    assert manifest.label_counts() == {state.value: 3 for state in FlowState}
    for record in records:
        assert len(record) == 4096
        assert record.upstream_pressure in PRESSURE_LEVELS
        assert record.valve_opening in OPENING_LEVELS
        assert np.all(np.isfinite(record.samples))
    assert len({record.id for record in records}) == 15


def test_generation_is_reproducible():
    first, _ = generate(_small_spec())
    again, _ = generate(_small_spec())
    other, _ = generate(_small_spec(seed=2))

    assert [r.id for r in first] == [r.id for r in again]
    for a, b in zip(first, again):
        assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(first[0].samples, other[0].samples)


def test_parallel_rendering_matches_serial():
    serial, _ = generate(_small_spec(), workers=1)
    parallel, _ = generate(_small_spec(), workers=3)
    for a, b in zip(serial, parallel):
        assert np.array_equal(a.samples, b.samples)


def test_conditions_cover_every_level():
    spec = _small_spec(counts={FlowState.TURBULENT_FLOW.value: 28}, signal_length=16)
    plans = SyntheticDatasetGenerator(spec).plans

    assert {(p.pressure, p.opening) for p in plans} == {(p, o) for p in PRESSURE_LEVELS for o in OPENING_LEVELS}


def test_louder_states_have_more_spectral_energy():
    records, _ = generate(_small_spec(condition_gain=0.0))
    energy = {}
    for record in records:
        energy.setdefault(record.label, []).append(float(np.mean(magnitude_spectrum(record.samples).magnitudes)))

    assert np.mean(energy[FlowState.NO_FLOW]) < np.mean(energy[FlowState.CHOKED_FLOW_CAVITATION])


def test_write_dataset_round_trips(tmp_path):
    spec = _small_spec()
    manifest_path = write_dataset(spec, tmp_path)
    records, _ = generate(spec)

    loaded = load_records(load_manifest(manifest_path))
    saved_spec = json.loads((tmp_path / "synth_spec.json").read_text())

    assert [r.id for r in loaded] == [r.id for r in records]
    for a, b in zip(loaded, records):
        assert np.array_equal(a.samples, b.samples)
    assert SynthSpec.from_dict(saved_spec) == spec


def test_spec_flags_and_validation():
    assert SynthSpec.from_dict({"full_length": True}).signal_length == FULL_SIGNAL_LENGTH
    assert sum(SynthSpec.from_dict({"bench_counts": True}).counts.values()) == 356

    with pytest.raises(ConfigError, match="unknown flow state"):
        SynthSpec(counts={"Boiling": 3}).validate()
    with pytest.raises(ConfigError, match="Nyquist"):
        SynthSpec(sample_rate=1000.0).validate()
    with pytest.raises(ConfigError, match="share the same signature"):
        signatures = dict(DEFAULT_SIGNATURES)
        signatures[FlowState.NO_FLOW.value] = signatures[FlowState.TURBULENT_FLOW.value]
        SynthSpec(signatures=signatures).validate()
    with pytest.raises(ConfigError, match="unknown synth settings"):
        SynthSpec.from_dict({"length": 10})


if __name__ == "__main__":
    print("=" * 60)
    print("SYNTHETIC DATA GENERATION TEST")
    print("=" * 60)

    records, manifest = generate(_small_spec())
    print(f"\n1. Generated {len(records)} records")
    print("\n   Label distribution:")
    for label, count in manifest.label_counts().items():
        print(f"     - {label}: {count} records")

    print("\n2. Sample records (first 5):")
    print("-" * 60)
    for record in records[:5]:
        print(f"  {record.id}: {record.label.value}, {record.upstream_pressure:g} bar, "
              f"{record.valve_opening:g}% open, rms {np.sqrt(np.mean(record.samples ** 2)):.3f}")
    print("\n" + "=" * 60)
