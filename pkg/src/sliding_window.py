"""
Non-overlapping sliding window augmentation.
Every signal is tiled from index 0 into consecutive disjoint windows of a fixed
size; the trailing remainder shorter than one window is dropped.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from pipeline_errors import ConfigError, DataError
from signal_dataset import (
    FlowState,
    Partition,
    SignalRecord,
    SplitAssignment,
    read_signal,
    write_signal,
)

INDEX_COLUMNS = [
    "parent_id", "window_index", "partition", "label", "pressure", "opening", "path", "sample_rate",
]

# Window size grid of the bench dataset (signals of 4 687 500 samples at 1 562 500 samples/s)
BENCH_WINDOW_SIZES = (2334720, 1556480, 1167360, 933888, 778240, 667062, 583680, 518825, 466944)


@dataclass(frozen=True, eq=False)
class Segment:
    """One window of a parent signal, carrying the parent's metadata."""

    parent_id: str
    window_index: int
    samples: np.ndarray
    sample_rate: float
    upstream_pressure: float
    valve_opening: float
    label: FlowState
    partition: Optional[Partition] = None

    @property
    def key(self) -> Tuple[str, int]:
        return (self.parent_id, self.window_index)

    def __len__(self) -> int:
        return int(self.samples.size)


def windows_per_signal(length: int, window_size: int) -> int:
    """Number of full windows that fit in a signal of the given length."""
    if window_size <= 0:
        raise ConfigError(f"window size must be positive, got {window_size}", stage="segment")
    return length // window_size


def segment_signal(
    record: SignalRecord,
    window_size: int,
    partition: Optional[Partition] = None,
) -> List[Segment]:
    """
    Split one record into floor(len / window_size) disjoint windows.

    Args:
        record: Source signal
        window_size: Samples per window, 1 <= window_size <= len(record)
        partition: Partition tag copied onto every segment

    Returns:
        Segments in window order; segment i covers [i*W, (i+1)*W)
    """
    length = len(record)
    if window_size <= 0:
        raise ConfigError(f"window size must be positive, got {window_size}", stage="segment")
    if window_size > length:
        raise DataError(
            f"window size {window_size} exceeds length {length} of record {record.id}", stage="segment")

    count = length // window_size
    # reshape of the prefix gives read-only views, no copies
    windows = record.samples[: count * window_size].reshape(count, window_size)
    return [
        Segment(
            parent_id=record.id,
            window_index=i,
            samples=windows[i],
            sample_rate=record.sample_rate,
            upstream_pressure=record.upstream_pressure,
            valve_opening=record.valve_opening,
            label=record.label,
            partition=partition,
        )
        for i in range(count)
    ]


def segment_dataset(
    records: Sequence[SignalRecord],
    split: SplitAssignment,
    window_size: int,
) -> Tuple[List[Segment], List[Segment]]:
    """
    Window every record and route its segments to the parent's partition.

    Returns:
        (train segments, test segments), each ordered by (parent_id, window_index)
    """
    train: List[Segment] = []
    test: List[Segment] = []
    for record in sorted(records, key=lambda r: r.id):
        partition = split.partition_of(record.id)
        segments = segment_signal(record, window_size, partition)
        (train if partition == Partition.TRAIN else test).extend(segments)
    return train, test


def count_segments(
    lengths: Union[Mapping[str, int], Iterable[Tuple[str, int]]],
    split: SplitAssignment,
    window_size: int,
) -> Tuple[int, int]:
    """
    Metadata-only segment counts per partition.

    Args:
        lengths: record id -> signal length
        split: Partition of the record ids
        window_size: Window size in samples

    Returns:
        (train count, test count)
    """
    items = lengths.items() if isinstance(lengths, Mapping) else lengths
    counts = {Partition.TRAIN: 0, Partition.TEST: 0}
    for record_id, length in items:
        if window_size > length:
            raise DataError(
                f"window size {window_size} exceeds length {length} of record {record_id}", stage="segment")
        counts[split.partition_of(record_id)] += windows_per_signal(length, window_size)
    return counts[Partition.TRAIN], counts[Partition.TEST]


def write_segments(segments: Sequence[Segment], out_dir: Union[str, Path], codec: str = "f32le") -> pd.DataFrame:
    """
    Write one signal file per segment plus index.csv.

    Returns:
        The index table that was written
    """
    out_dir = Path(out_dir)
    signal_dir = out_dir / "segments"
    signal_dir.mkdir(parents=True, exist_ok=True)
    suffix = "f32le" if codec == "f32le" else "csv"

    rows = []
    for segment in sorted(segments, key=lambda s: s.key):
        relative = Path("segments") / f"{segment.parent_id}_w{segment.window_index:04d}.{suffix}"
        write_signal(out_dir / relative, segment.samples, codec)
        rows.append({
            "parent_id": segment.parent_id,
            "window_index": segment.window_index,
            "partition": segment.partition.value if segment.partition else "",
            "label": segment.label.value,
            "pressure": segment.upstream_pressure,
            "opening": segment.valve_opening,
            "path": relative.as_posix(),
            "sample_rate": segment.sample_rate,
        })

    index = pd.DataFrame(rows, columns=INDEX_COLUMNS)
    index.to_csv(out_dir / "index.csv", index=False)
    return index


def read_segment_index(index_path: Union[str, Path]) -> List[Segment]:
    """Load the segments listed in an index.csv written by write_segments."""
    index_path = Path(index_path)
    try:
        index = pd.read_csv(index_path, dtype={"parent_id": str, "partition": str},
                            keep_default_na=False, float_precision="round_trip")
    except (OSError, pd.errors.ParserError) as e:
        raise DataError(f"cannot read segment index {index_path}: {e}", stage="featurize")

    missing = [column for column in INDEX_COLUMNS if column not in index.columns]
    if missing:
        raise DataError(f"segment index {index_path} is missing columns {missing}", stage="featurize")

    segments = []
    for row in index.itertuples(index=False):
        path = index_path.parent / row.path
        codec = "csv" if path.suffix == ".csv" else "f32le"
        try:
            samples = read_signal(path, codec)
        except OSError as e:
            raise DataError(f"cannot read segment {path}: {e}", stage="featurize")
        samples.flags.writeable = False
        segments.append(Segment(
            parent_id=row.parent_id,
            window_index=int(row.window_index),
            samples=samples,
            sample_rate=float(row.sample_rate),
            upstream_pressure=float(row.pressure),
            valve_opening=float(row.opening),
            label=FlowState.parse(row.label),
            partition=Partition(row.partition) if row.partition else None,
        ))
    return segments
