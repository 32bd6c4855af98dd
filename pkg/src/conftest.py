import os

import hypothesis
import numpy as np
import pytest

from generate_synthetic_data import ClassSignature, SynthSpec, SyntheticDatasetGenerator
from signal_dataset import FlowState, SignalRecord

np.seterr(all="warn")

hypothesis.settings.register_profile("dev", max_examples=25, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=200, deadline=None)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "dev"))


@pytest.fixture
def make_record():
    """Factory for in-memory records with random samples."""

    def factory(record_id="rec-000", label=FlowState.TURBULENT_FLOW, length=64, samples=None,
                pressure=10.0, opening=100.0, seed=0, sample_rate=1000.0):
        if samples is None:
            samples = np.random.default_rng(seed).standard_normal(length)
        return SignalRecord(
            id=record_id,
            samples=np.asarray(samples, dtype=np.float64),
            sample_rate=sample_rate,
            upstream_pressure=pressure,
            valve_opening=opening,
            label=label,
        )

    return factory


@pytest.fixture(scope="session")
def synthetic_dataset(tmp_path_factory):
    """Five flow states x 20 records of 65 536 samples, written once per session."""
    out_dir = tmp_path_factory.mktemp("synthetic")
    spec = SynthSpec(seed=7)
    return SyntheticDatasetGenerator(spec).write_dataset(out_dir)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Five flow states x 6 records of 8 192 samples for fast command tests."""
    out_dir = tmp_path_factory.mktemp("small")
    spec = SynthSpec(counts={state.value: 6 for state in FlowState}, signal_length=8192, seed=3)
    return SyntheticDatasetGenerator(spec).write_dataset(out_dir)


@pytest.fixture(scope="session")
def confounded_dataset(tmp_path_factory):
    """
    Broadband-noise states that differ only in level, with a strong operating
    condition gain, so absolute spectral levels overlap across states unless
    the condition is taken into account.
    """
    out_dir = tmp_path_factory.mktemp("confounded")
    levels = {
        FlowState.CHOKED_FLOW_CAVITATION: 1.6,
        FlowState.CONSTANT_CAVITATION: 1.3,
        FlowState.INCIPIENT_CAVITATION: 1.05,
        FlowState.TURBULENT_FLOW: 0.85,
        FlowState.NO_FLOW: 0.7,
    }
    spec = SynthSpec(
        signal_length=16384,
        signatures={state.value: ClassSignature(noise=noise) for state, noise in levels.items()},
        condition_gain=0.3,
        seed=11,
    )
    return SyntheticDatasetGenerator(spec).write_dataset(out_dir)
