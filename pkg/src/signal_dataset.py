"""
Dataset module for labeled valve acoustic signals.
This module loads signal manifests, decodes signal files, maps flow states onto
classification tasks and splits whole records into train/test partitions.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from pipeline_errors import ConfigError, DataError

logger = logging.getLogger(__name__)

SUPPORTED_CODECS = ("f32le", "csv")


class FlowState(str, Enum):
    """Flow status observed in one measurement."""

    CHOKED_FLOW_CAVITATION = "ChokedFlowCavitation"
    CONSTANT_CAVITATION = "ConstantCavitation"
    INCIPIENT_CAVITATION = "IncipientCavitation"
    TURBULENT_FLOW = "TurbulentFlow"
    NO_FLOW = "NoFlow"

    @classmethod
    def parse(cls, value: Union[str, "FlowState"]) -> "FlowState":
        if isinstance(value, FlowState):
            return value
        try:
            return cls(value)
        except ValueError:
            allowed = ", ".join(state.value for state in cls)
            raise DataError(f"unknown flow state '{value}' (expected one of: {allowed})")


CAVITATION_STATES = (
    FlowState.CHOKED_FLOW_CAVITATION,
    FlowState.CONSTANT_CAVITATION,
    FlowState.INCIPIENT_CAVITATION,
)


class Partition(str, Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass(frozen=True)
class ClassificationTask:
    """
    A labelling of flow states into the classes a model is trained on.

    Attributes:
        name: Task identifier used in configs and model files
        classes: Ordered class names; index i is the model's class i
        mapping: Flow state value -> class name
    """

    name: str
    classes: Tuple[str, ...]
    mapping: Mapping[str, str]

    @property
    def objective(self) -> str:
        return "binary" if len(self.classes) == 2 else "multiclass"

    @property
    def positive_class(self) -> str:
        return self.classes[-1]

    def class_of(self, state: Union[str, FlowState]) -> str:
        return self.mapping[FlowState.parse(state).value]

    def encode(self, states: Iterable[Union[str, FlowState]]) -> np.ndarray:
        """Map flow states to integer class indices."""
        index = {name: i for i, name in enumerate(self.classes)}
        return np.array([index[self.class_of(state)] for state in states], dtype=np.int64)


TASKS: Dict[str, ClassificationTask] = {
    "binary": ClassificationTask(
        name="binary",
        classes=("NoCavitation", "Cavitation"),
        mapping={
            **{state.value: "Cavitation" for state in CAVITATION_STATES},
            FlowState.TURBULENT_FLOW.value: "NoCavitation",
            FlowState.NO_FLOW.value: "NoCavitation",
        },
    ),
    "four_class": ClassificationTask(
        name="four_class",
        classes=(
            FlowState.CHOKED_FLOW_CAVITATION.value,
            FlowState.CONSTANT_CAVITATION.value,
            FlowState.INCIPIENT_CAVITATION.value,
            "NonCavitation",
        ),
        mapping={
            **{state.value: state.value for state in CAVITATION_STATES},
            FlowState.TURBULENT_FLOW.value: "NonCavitation",
            FlowState.NO_FLOW.value: "NonCavitation",
        },
    ),
    "five_class": ClassificationTask(
        name="five_class",
        classes=tuple(state.value for state in FlowState),
        mapping={state.value: state.value for state in FlowState},
    ),
}


def get_task(name: str) -> ClassificationTask:
    if name not in TASKS:
        raise ConfigError(f"unknown task '{name}' (expected one of: {', '.join(TASKS)})", stage="config")
    return TASKS[name]


@dataclass(frozen=True, eq=False)
class SignalRecord:
    """One raw acoustic measurement with its operating condition and label."""

    id: str
    samples: np.ndarray
    sample_rate: float
    upstream_pressure: float
    valve_opening: float
    label: FlowState

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise DataError(f"record {self.id}: samples must be a non-empty 1-D sequence", stage="load")
        if not self.sample_rate > 0:
            raise DataError(f"record {self.id}: sample_rate must be positive", stage="load")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "label", FlowState.parse(self.label))

    def __len__(self) -> int:
        return int(self.samples.size)


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: Path
    upstream_pressure: float
    valve_opening: float
    label: FlowState


@dataclass(frozen=True)
class DatasetManifest:
    """Validated description of a dataset on disk."""

    entries: Tuple[ManifestEntry, ...]
    pressure_levels: Tuple[float, ...]
    opening_levels: Tuple[float, ...]
    sample_rate: float
    signal_length: int
    codec: str = "f32le"
    length_tolerance: int = 0

    def label_counts(self) -> Dict[str, int]:
        """Number of entries per flow state, in enumeration order."""
        counts = {state.value: 0 for state in FlowState}
        for entry in self.entries:
            counts[entry.label.value] += 1
        return {label: count for label, count in counts.items() if count}

    def to_dict(self, relative_to: Optional[Path] = None) -> Dict[str, object]:
        entries = []
        for entry in self.entries:
            path = entry.path
            if relative_to is not None:
                try:
                    path = path.relative_to(relative_to)
                except ValueError:
                    pass
            entries.append({
                "id": entry.id,
                "path": path.as_posix(),
                "upstream_pressure": entry.upstream_pressure,
                "valve_opening": entry.valve_opening,
                "label": entry.label.value,
            })
        return {
            "codec": self.codec,
            "sample_rate": self.sample_rate,
            "signal_length": self.signal_length,
            "length_tolerance": self.length_tolerance,
            "pressure_levels": list(self.pressure_levels),
            "opening_levels": list(self.opening_levels),
            "entries": entries,
        }

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        with open(path, "w") as f:
            json.dump(self.to_dict(relative_to=path.parent.resolve()), f, indent=2)
        return path


def load_manifest(path: Union[str, Path], check_files: bool = True) -> DatasetManifest:
    """
    Load and validate a dataset manifest.

    Args:
        path: JSON manifest file
        check_files: Verify that every referenced signal file exists

    Returns:
        Validated DatasetManifest; entry paths are resolved against the manifest directory
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise DataError(f"cannot read manifest {path}: {e}", stage="load")

    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise DataError(f"malformed manifest {path}: line {e.lineno}, column {e.colno}: {e.msg}", stage="load")

    if not isinstance(document, dict):
        raise DataError(f"malformed manifest {path}: top level must be an object", stage="load")

    missing_keys = [key for key in ("entries", "pressure_levels", "opening_levels", "sample_rate", "signal_length")
                    if key not in document]
    if missing_keys:
        raise DataError(f"manifest {path} is missing keys: {missing_keys}", stage="load")

    codec = document.get("codec", "f32le")
    if codec not in SUPPORTED_CODECS:
        raise DataError(f"manifest codec '{codec}' not supported (use one of {SUPPORTED_CODECS})", stage="load")

    raw_entries = document["entries"]
    if not isinstance(raw_entries, list) or not raw_entries:
        raise DataError("manifest has no entries", stage="load")

    pressure_levels = tuple(float(level) for level in document["pressure_levels"])
    opening_levels = tuple(float(level) for level in document["opening_levels"])
    sample_rate = float(document["sample_rate"])
    signal_length = int(document["signal_length"])
    if sample_rate <= 0 or signal_length <= 0:
        raise DataError("manifest sample_rate and signal_length must be positive", stage="load")

    base_dir = path.parent.resolve()
    entries: List[ManifestEntry] = []
    seen_ids = set()
    for i, raw in enumerate(raw_entries):
        where = f"entry {i}"
        try:
            file_path = Path(raw["path"])
            entry_id = str(raw.get("id", file_path.stem))
            where = f"entry {i} ({entry_id})"
            pressure = float(raw["upstream_pressure"])
            opening = float(raw["valve_opening"])
            label = FlowState.parse(raw["label"])
        except (KeyError, TypeError) as e:
            raise DataError(f"manifest {where} is missing field {e}", stage="load")
        except ValueError as e:
            raise DataError(f"manifest {where} has an invalid value: {e}", stage="load")
        except DataError as e:
            raise DataError(f"manifest {where}: {e.message}", stage="load")

        if pressure not in pressure_levels:
            raise DataError(
                f"manifest {where}: upstream pressure {pressure:g} not in pressure_levels "
                f"{[f'{p:g}' for p in pressure_levels]}", stage="load")
        if opening not in opening_levels:
            raise DataError(
                f"manifest {where}: valve opening {opening:g} not in opening_levels "
                f"{[f'{o:g}' for o in opening_levels]}", stage="load")
        if entry_id in seen_ids:
            raise DataError(f"manifest {where}: duplicate id", stage="load")
        seen_ids.add(entry_id)

        if not file_path.is_absolute():
            file_path = base_dir / file_path
        entries.append(ManifestEntry(entry_id, file_path, pressure, opening, label))

    if check_files:
        absent = [str(entry.path) for entry in entries if not entry.path.exists()]
        if absent:
            raise DataError(f"manifest references {len(absent)} missing signal file(s): {absent}", stage="load")

    return DatasetManifest(
        entries=tuple(entries),
        pressure_levels=pressure_levels,
        opening_levels=opening_levels,
        sample_rate=sample_rate,
        signal_length=signal_length,
        codec=codec,
        length_tolerance=int(document.get("length_tolerance", 0)),
    )


def read_signal(path: Union[str, Path], codec: str) -> np.ndarray:
    """Decode one signal file into float64 samples."""
    path = Path(path)
    if codec == "f32le":
        return np.fromfile(path, dtype="<f4").astype(np.float64)
    if codec == "csv":
        return np.loadtxt(path, delimiter=",", ndmin=1, dtype=np.float64)
    raise DataError(f"unsupported codec '{codec}'", stage="load")


def write_signal(path: Union[str, Path], samples: np.ndarray, codec: str) -> Path:
    """Encode samples into a signal file (headerless little-endian float32 or single-column CSV)."""
    path = Path(path)
    samples = np.asarray(samples, dtype=np.float64)
    if codec == "f32le":
        samples.astype("<f4").tofile(path)
    elif codec == "csv":
        np.savetxt(path, samples, fmt="%.17g")
    else:
        raise DataError(f"unsupported codec '{codec}'", stage="load")
    return path


def check_finite(samples: np.ndarray, what: str, stage: str) -> None:
    """Raise DataError naming the first non-finite sample."""
    bad = np.flatnonzero(~np.isfinite(samples))
    if bad.size:
        raise DataError(f"{what}: non-finite sample at index {int(bad[0])}", stage=stage)


def _load_entry(manifest: DatasetManifest, entry: ManifestEntry) -> SignalRecord:
    try:
        samples = read_signal(entry.path, manifest.codec)
    except OSError as e:
        raise DataError(f"cannot read signal {entry.path}: {e}", stage="load")
    except ValueError as e:
        raise DataError(f"cannot decode signal {entry.path}: {e}", stage="load")

    if abs(samples.size - manifest.signal_length) > manifest.length_tolerance:
        raise DataError(
            f"signal {entry.id} decodes to {samples.size} samples, manifest declares "
            f"{manifest.signal_length} (tolerance {manifest.length_tolerance})", stage="load")
    check_finite(samples, f"signal {entry.id}", stage="load")

    return SignalRecord(
        id=entry.id,
        samples=samples,
        sample_rate=manifest.sample_rate,
        upstream_pressure=entry.upstream_pressure,
        valve_opening=entry.valve_opening,
        label=entry.label,
    )


def load_records(manifest: DatasetManifest, workers: int = 1) -> List[SignalRecord]:
    """
    Decode every signal referenced by the manifest.

    Args:
        manifest: Validated manifest
        workers: Number of reader threads

    Returns:
        Records in manifest order
    """
    if workers <= 1:
        return [_load_entry(manifest, entry) for entry in manifest.entries]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda entry: _load_entry(manifest, entry), manifest.entries))


@dataclass(frozen=True)
class SplitAssignment:
    """Train/test partition over whole record ids."""

    assignments: Mapping[str, Partition]
    seed: int
    train_fraction: float

    def partition_of(self, record_id: str) -> Partition:
        try:
            return self.assignments[record_id]
        except KeyError:
            raise DataError(f"record {record_id} is not covered by the split", stage="segment")

    def ids(self, partition: Partition) -> List[str]:
        return sorted(record_id for record_id, p in self.assignments.items() if p == partition)

    def counts(self) -> Dict[str, int]:
        return {p.value: len(self.ids(p)) for p in Partition}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"record_id": list(self.assignments), "partition": [p.value for p in self.assignments.values()]}
        )


def _stratified_train_counts(label_sizes: Mapping[str, int], train_fraction: float) -> Dict[str, int]:
    """Per-label floors plus largest-remainder top-up to floor(N * fraction)."""
    exact = {label: size * train_fraction for label, size in label_sizes.items()}
    counts = {label: math.floor(value) for label, value in exact.items()}
    target = math.floor(sum(label_sizes.values()) * train_fraction)
    leftover = target - sum(counts.values())

    # ties keep enumeration order (sorted() is stable)
    by_remainder = sorted(exact, key=lambda label: exact[label] - counts[label], reverse=True)
    for label in by_remainder:
        if leftover <= 0:
            break
        if counts[label] < label_sizes[label] and exact[label] > counts[label]:
            counts[label] += 1
            leftover -= 1
    return counts


def split_records(
    manifest: Union[DatasetManifest, Sequence[SignalRecord]],
    train_fraction: float,
    seed: int,
) -> SplitAssignment:
    """
    Stratified train/test split over whole records, done before any windowing.

    Args:
        manifest: Manifest (or records) whose ids are partitioned
        train_fraction: Share of records per label assigned to training, in (0, 1)
        seed: Seed for the per-label shuffle

    Returns:
        SplitAssignment covering every record id exactly once
    """
    if not 0 < train_fraction < 1:
        raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}", stage="split")

    items = manifest.entries if isinstance(manifest, DatasetManifest) else manifest
    by_label: Dict[str, List[str]] = {}
    for state in FlowState:
        ids = sorted(item.id for item in items if item.label == state)
        if ids:
            by_label[state.value] = ids
    if not by_label:
        raise DataError("nothing to split: no records", stage="split")

    for label, ids in by_label.items():
        if len(ids) < 2:
            logger.warning("label %s has only %d record(s); it cannot appear in both partitions", label, len(ids))

    train_counts = _stratified_train_counts({label: len(ids) for label, ids in by_label.items()}, train_fraction)
    total = sum(len(ids) for ids in by_label.values())
    total_train = sum(train_counts.values())
    if total_train == 0 or total_train == total:
        raise DataError(
            f"cannot stratify {total} record(s) at train_fraction {train_fraction}: "
            f"one partition would be empty", stage="split")

    rng = np.random.default_rng(seed)
    assignments: Dict[str, Partition] = {}
    for label, ids in by_label.items():
        order = rng.permutation(len(ids))
        n_train = train_counts[label]
        for rank, position in enumerate(order):
            assignments[ids[position]] = Partition.TRAIN if rank < n_train else Partition.TEST

    return SplitAssignment(assignments=dict(sorted(assignments.items())), seed=seed, train_fraction=train_fraction)
