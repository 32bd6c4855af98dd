"""
Generate synthetic labeled valve acoustic datasets.
Each record is a sum of class-specific tones with mild amplitude modulation
plus Gaussian broadband noise, scaled slightly by its operating condition so
that grouped aggregates carry information.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Tuple, Union

import numpy as np
from faker import Faker

from pipeline_errors import ConfigError
from signal_dataset import DatasetManifest, FlowState, ManifestEntry, SignalRecord, write_signal

logger = logging.getLogger(__name__)

# Acquisition settings of the bench recordings
SAMPLE_RATE = 1_562_500.0
FULL_SIGNAL_LENGTH = 4_687_500
DESK_SIGNAL_LENGTH = 65_536
PRESSURE_LEVELS = (10.0, 9.0, 6.0, 4.0)
OPENING_LEVELS = (100.0, 90.0, 75.0, 50.0, 25.0, 10.0, 5.0)

# Records per flow state in the bench dataset (356 in total)
BENCH_COUNTS = {
    FlowState.CHOKED_FLOW_CAVITATION.value: 72,
    FlowState.CONSTANT_CAVITATION.value: 93,
    FlowState.INCIPIENT_CAVITATION.value: 40,
    FlowState.TURBULENT_FLOW.value: 118,
    FlowState.NO_FLOW.value: 33,
}

ID_PREFIXES = {
    FlowState.CHOKED_FLOW_CAVITATION.value: "chk",
    FlowState.CONSTANT_CAVITATION.value: "con",
    FlowState.INCIPIENT_CAVITATION.value: "inc",
    FlowState.TURBULENT_FLOW.value: "tur",
    FlowState.NO_FLOW.value: "nof",
}


@dataclass(frozen=True)
class ClassSignature:
    """
    Spectral signature of one flow state.

    Attributes:
        tones: (frequency Hz, amplitude) pairs
        noise: Standard deviation of the broadband Gaussian noise
        modulation: Amplitude modulation depth of the tones, in [0, 1)
        modulation_hz: Modulation frequency
    """

    tones: Tuple[Tuple[float, float], ...] = ()
    noise: float = 0.0
    modulation: float = 0.0
    modulation_hz: float = 100.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tones": [list(tone) for tone in self.tones],
            "noise": self.noise,
            "modulation": self.modulation,
            "modulation_hz": self.modulation_hz,
        }

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "ClassSignature":
        return cls(
            tones=tuple((float(f), float(a)) for f, a in values.get("tones", ())),
            noise=float(values.get("noise", 0.0)),
            modulation=float(values.get("modulation", 0.0)),
            modulation_hz=float(values.get("modulation_hz", 100.0)),
        )


DEFAULT_SIGNATURES = {
    FlowState.NO_FLOW.value: ClassSignature(tones=(), noise=0.05),
    FlowState.TURBULENT_FLOW.value: ClassSignature(
        tones=((12_000.0, 0.2), (31_000.0, 0.1)), noise=0.25),
    FlowState.INCIPIENT_CAVITATION.value: ClassSignature(
        tones=((48_000.0, 0.5), (95_000.0, 0.25)), noise=0.6, modulation=0.2, modulation_hz=120.0),
    FlowState.CONSTANT_CAVITATION.value: ClassSignature(
        tones=((48_000.0, 1.0), (140_000.0, 0.6), (210_000.0, 0.3)), noise=1.0, modulation=0.4,
        modulation_hz=90.0),
    FlowState.CHOKED_FLOW_CAVITATION.value: ClassSignature(
        tones=((48_000.0, 0.7), (140_000.0, 0.9), (320_000.0, 0.5)), noise=1.6, modulation=0.6,
        modulation_hz=60.0),
}


def _default_counts() -> Dict[str, int]:
    return {state.value: 20 for state in FlowState}


@dataclass(frozen=True)
class SynthSpec:
    """Everything needed to regenerate a synthetic dataset bit for bit."""

    counts: Dict[str, int] = field(default_factory=_default_counts)
    signal_length: int = DESK_SIGNAL_LENGTH
    sample_rate: float = SAMPLE_RATE
    pressure_levels: Tuple[float, ...] = PRESSURE_LEVELS
    opening_levels: Tuple[float, ...] = OPENING_LEVELS
    signatures: Dict[str, ClassSignature] = field(default_factory=lambda: dict(DEFAULT_SIGNATURES))
    condition_gain: float = 0.15
    seed: int = 0
    codec: str = "f32le"

    def validate(self) -> "SynthSpec":
        problems = []
        known = {state.value for state in FlowState}
        for label, count in self.counts.items():
            if label not in known:
                problems.append(f"unknown flow state '{label}'")
            elif count < 1:
                problems.append(f"count for {label} must be >= 1")
            elif label not in self.signatures:
                problems.append(f"no signature for {label}")
        if not self.counts:
            problems.append("counts must name at least one flow state")
        if self.signal_length < 8:
            problems.append("signal_length must be >= 8")
        if not self.sample_rate > 0:
            problems.append("sample_rate must be positive")
        if not self.pressure_levels or not self.opening_levels:
            problems.append("pressure_levels and opening_levels must be non-empty")
        if not 0 <= self.condition_gain < 1:
            problems.append("condition_gain must be in [0, 1)")
        if self.codec not in ("f32le", "csv"):
            problems.append(f"unsupported codec '{self.codec}'")

        used = [label for label in self.counts if label in self.signatures]
        for label in used:
            signature = self.signatures[label]
            if signature.noise < 0 or not 0 <= signature.modulation < 1:
                problems.append(f"signature of {label} needs noise >= 0 and modulation in [0, 1)")
            for frequency, _ in signature.tones:
                if not 0 < frequency < self.sample_rate / 2:
                    problems.append(f"tone {frequency:g} Hz of {label} is outside (0, Nyquist)")
        for i, a in enumerate(used):
            for b in used[i + 1:]:
                if self.signatures[a] == self.signatures[b]:
                    problems.append(f"{a} and {b} share the same signature")

        if problems:
            raise ConfigError("invalid synthetic dataset spec: " + "; ".join(problems), stage="synth")
        return self

    def to_dict(self) -> Dict[str, Any]:
        values = asdict(self)
        values["pressure_levels"] = list(self.pressure_levels)
        values["opening_levels"] = list(self.opening_levels)
        values["signatures"] = {label: signature.to_dict() for label, signature in self.signatures.items()}
        return values

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "SynthSpec":
        values = dict(values)
        if values.pop("full_length", False):
            values["signal_length"] = FULL_SIGNAL_LENGTH
        if values.pop("bench_counts", False):
            values["counts"] = dict(BENCH_COUNTS)
        if "signatures" in values:
            values["signatures"] = {
                label: ClassSignature.from_dict(signature) for label, signature in values["signatures"].items()
            }
        for key in ("pressure_levels", "opening_levels"):
            if key in values:
                values[key] = tuple(float(level) for level in values[key])
        unknown = sorted(set(values) - set(cls.__dataclass_fields__))
        if unknown:
            raise ConfigError(f"unknown synth settings: {unknown}", stage="synth")
        return cls(**values).validate()

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SynthSpec":
        path = Path(path)
        try:
            with open(path, "r") as f:
                return cls.from_dict(json.load(f))
        except OSError as e:
            raise ConfigError(f"cannot read synth spec {path}: {e}", stage="synth")
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed synth spec {path}: line {e.lineno}: {e.msg}", stage="synth")


@dataclass(frozen=True)
class _Plan:
    record_id: str
    label: str
    pressure: float
    opening: float
    seed: np.random.SeedSequence


class SyntheticDatasetGenerator:
    """Plans and renders the records described by a SynthSpec."""

    def __init__(self, spec: SynthSpec):
        self.spec = spec.validate()
        self.fake = Faker()
        self.fake.seed_instance(spec.seed)
        self.plans = self._plan_records()

    def _plan_records(self) -> List[_Plan]:
        spec = self.spec
        labels = [state.value for state in FlowState if state.value in spec.counts]
        total = sum(spec.counts[label] for label in labels)
        seeds = np.random.SeedSequence(spec.seed).spawn(total)

        plans = []
        position = 0
        for label in labels:
            for j in range(spec.counts[label]):
                # coprime level counts walk through every (pressure, opening) cell
                pressure = spec.pressure_levels[j % len(spec.pressure_levels)]
                opening = spec.opening_levels[j % len(spec.opening_levels)]
                tag = self.fake.lexify(text="????").lower()
                record_id = f"{ID_PREFIXES[label]}-{j:03d}-{tag}"
                plans.append(_Plan(record_id, label, pressure, opening, seeds[position]))
                position += 1
        return plans

    def _condition_scale(self, pressure: float, opening: float) -> float:
        def rank(value: float, levels: Tuple[float, ...]) -> float:
            ordered = sorted(levels)
            return ordered.index(value) / (len(ordered) - 1) if len(ordered) > 1 else 0.5

        p = rank(pressure, self.spec.pressure_levels)
        o = rank(opening, self.spec.opening_levels)
        return 1.0 + self.spec.condition_gain * (p + o - 1.0)

    def render(self, plan: _Plan) -> SignalRecord:
        """Synthesize the samples of one planned record."""
        spec = self.spec
        signature = spec.signatures[plan.label]
        rng = np.random.default_rng(plan.seed)
        t = np.arange(spec.signal_length) / spec.sample_rate

        samples = np.zeros(spec.signal_length)
        if signature.tones:
            envelope = 1.0 + signature.modulation * np.sin(2 * np.pi * signature.modulation_hz * t)
            for frequency, amplitude in signature.tones:
                phase = rng.uniform(0, 2 * np.pi)
                samples += amplitude * np.sin(2 * np.pi * frequency * t + phase)
            samples *= envelope
        if signature.noise > 0:
            samples += signature.noise * rng.standard_normal(spec.signal_length)
        samples *= self._condition_scale(plan.pressure, plan.opening)

        return SignalRecord(
            id=plan.record_id,
            # stored as float32 on disk; keep the in-memory record identical to a reload
            samples=samples.astype(np.float32).astype(np.float64),
            sample_rate=spec.sample_rate,
            upstream_pressure=plan.pressure,
            valve_opening=plan.opening,
            label=plan.label,
        )

    def iter_records(self, workers: int = 1) -> Iterator[SignalRecord]:
        if workers <= 1:
            for plan in self.plans:
                yield self.render(plan)
            return
        with ThreadPoolExecutor(max_workers=workers) as pool:
            yield from pool.map(self.render, self.plans)

    def manifest(self, signal_dir: Path) -> DatasetManifest:
        suffix = "f32le" if self.spec.codec == "f32le" else "csv"
        return DatasetManifest(
            entries=tuple(
                ManifestEntry(
                    id=plan.record_id,
                    path=signal_dir / f"{plan.record_id}.{suffix}",
                    upstream_pressure=plan.pressure,
                    valve_opening=plan.opening,
                    label=FlowState(plan.label),
                )
                for plan in self.plans
            ),
            pressure_levels=tuple(self.spec.pressure_levels),
            opening_levels=tuple(self.spec.opening_levels),
            sample_rate=self.spec.sample_rate,
            signal_length=self.spec.signal_length,
            codec=self.spec.codec,
        )

    def write_dataset(self, out_dir: Union[str, Path], workers: int = 1) -> Path:
        """
        Write signals/<id>.<codec> files plus manifest.json, one record at a time.

        Returns:
            Path of the manifest
        """
        out_dir = Path(out_dir).resolve()
        signal_dir = out_dir / "signals"
        signal_dir.mkdir(parents=True, exist_ok=True)
        manifest = self.manifest(signal_dir)
        for entry, record in zip(manifest.entries, self.iter_records(workers)):
            write_signal(entry.path, record.samples, self.spec.codec)
        with open(out_dir / "synth_spec.json", "w") as f:
            json.dump(self.spec.to_dict(), f, indent=2)
        logger.info("wrote %d synthetic records to %s", len(manifest.entries), signal_dir)
        return manifest.write(out_dir / "manifest.json")


def generate(spec: SynthSpec, workers: int = 1) -> Tuple[List[SignalRecord], DatasetManifest]:
    """
    Render every planned record in memory.

    Returns:
        (records in manifest order, manifest with signals/<id> paths relative to the current directory)
    """
    generator = SyntheticDatasetGenerator(spec)
    records = list(generator.iter_records(workers))
    return records, generator.manifest(Path("signals"))


def write_dataset(spec: SynthSpec, out_dir: Union[str, Path], workers: int = 1) -> Path:
    return SyntheticDatasetGenerator(spec).write_dataset(out_dir, workers)

