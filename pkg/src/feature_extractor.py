"""
Statistical feature extraction from magnitude spectra.
Fifteen statistics in three families (central trend, dispersion degree,
distribution shape) are computed per spectrum and collected into a FeatureTable.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from pipeline_errors import DataError, NumericError, SchemaError
from sliding_window import Segment
from spectrum import Spectrum, dump_spectrum, fft_magnitude

logger = logging.getLogger(__name__)

FEATURE_NAMES = (
    "mean", "median", "low_quartile", "upper_quartile",
    "min", "max", "iqr", "std", "rms", "sra",
    "kurtosis", "skewness", "shape_factor", "clearance_factor", "crest_factor",
)
META_COLUMNS = ("parent_id", "window_index", "partition", "pressure", "opening", "label")
FLAG_COLUMN = "degenerate"
MIN_SPECTRUM_LENGTH = 4

_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class FeatureVector:
    """The fifteen statistics of one spectrum plus the segment metadata they belong to."""

    mean: float
    median: float
    low_quartile: float
    upper_quartile: float
    min: float
    max: float
    iqr: float
    std: float
    rms: float
    sra: float
    kurtosis: float
    skewness: float
    shape_factor: float
    clearance_factor: float
    crest_factor: float
    degenerate: bool = False
    parent_id: str = ""
    window_index: int = 0
    partition: str = ""
    pressure: float = float("nan")
    opening: float = float("nan")
    label: str = ""

    def values(self) -> Tuple[float, ...]:
        return tuple(getattr(self, name) for name in FEATURE_NAMES)

    @property
    def key(self) -> Tuple[str, int]:
        return (self.parent_id, self.window_index)


def order_quartile(sorted_x: np.ndarray, p: Fraction) -> float:
    """
    Quartile by order statistics: x_(floor(np)+1) when np is fractional,
    otherwise the mean of x_(np) and x_(np+1) (1-based order statistics).
    """
    n = sorted_x.size
    position = n * p
    if position.denominator == 1:
        k = int(position)
        return float((sorted_x[k - 1] + sorted_x[k]) / 2)
    return float(sorted_x[int(position)])


def order_median(sorted_x: np.ndarray) -> float:
    n = sorted_x.size
    if n % 2:
        return float(sorted_x[n // 2])
    return float((sorted_x[n // 2 - 1] + sorted_x[n // 2]) / 2)


def _ratio(numerator: float, denominator: float) -> Tuple[float, bool]:
    """numerator / denominator, with 0/0 read as 1 and flagged."""
    if denominator == 0:
        return 1.0, True
    return numerator / denominator, False


def compute_statistics(values: np.ndarray) -> Tuple[Dict[str, float], bool]:
    """
    Compute the fifteen statistics of a sequence.

    Args:
        values: 1-D sequence with at least four entries

    Returns:
        (feature name -> value, degenerate flag)
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or x.size < MIN_SPECTRUM_LENGTH:
        raise DataError(
            f"feature extraction needs at least {MIN_SPECTRUM_LENGTH} values, got {x.size}", stage="featurize")
    if not np.all(np.isfinite(x)):
        raise NumericError("feature extraction input contains non-finite values", stage="featurize")

    xs = np.sort(x)
    abs_x = np.abs(x)
    mu = float(np.mean(x))
    deviations = x - mu
    sigma = float(np.sqrt(np.mean(deviations ** 2)))
    rms = float(np.sqrt(np.mean(x ** 2)))
    sra = float(np.mean(np.sqrt(abs_x)) ** 2)
    peak = float(np.max(abs_x))
    q1 = order_quartile(xs, Fraction(1, 4))
    q3 = order_quartile(xs, Fraction(3, 4))

    degenerate = False
    if sigma == 0 or sigma <= 8 * _EPS * abs(mu):
        kurtosis, skewness = 0.0, 0.0
        degenerate = True
    else:
        kurtosis = float(np.mean(deviations ** 4) / sigma ** 4)
        skewness = float(np.mean(deviations ** 3) / sigma ** 3)

    shape_factor, flat_shape = _ratio(rms, float(np.mean(abs_x)))
    clearance_factor, flat_clearance = _ratio(peak, sra)
    crest_factor, flat_crest = _ratio(peak, rms)
    degenerate = degenerate or flat_shape or flat_clearance or flat_crest

    statistics = {
        "mean": mu,
        "median": order_median(xs),
        "low_quartile": q1,
        "upper_quartile": q3,
        "min": float(xs[0]),
        "max": float(xs[-1]),
        "iqr": q3 - q1,
        "std": sigma,
        "rms": rms,
        "sra": sra,
        "kurtosis": kurtosis,
        "skewness": skewness,
        "shape_factor": shape_factor,
        "clearance_factor": clearance_factor,
        "crest_factor": crest_factor,
    }
    return statistics, degenerate


def extract_features(spectrum: Union[Spectrum, np.ndarray], segment: Optional[Segment] = None) -> FeatureVector:
    """
    Build the feature vector of one spectrum.

    Args:
        spectrum: Magnitude spectrum (or a bare value sequence)
        segment: Segment the spectrum came from; its metadata is carried over

    Returns:
        FeatureVector
    """
    values = spectrum.magnitudes if isinstance(spectrum, Spectrum) else spectrum
    statistics, degenerate = compute_statistics(values)
    metadata = {}
    if segment is not None:
        metadata = {
            "parent_id": segment.parent_id,
            "window_index": segment.window_index,
            "partition": segment.partition.value if segment.partition else "",
            "pressure": segment.upstream_pressure,
            "opening": segment.valve_opening,
            "label": segment.label.value,
        }
    return FeatureVector(**statistics, degenerate=degenerate, **metadata)


@dataclass
class FeatureTable:
    """
    Rows of numeric features with their categorical metadata, label and partition.

    The frame always holds META_COLUMNS first, then feature_columns, then the
    degenerate flag.
    """

    frame: pd.DataFrame
    feature_columns: List[str]

    def __post_init__(self):
        columns = list(self.frame.columns)
        if len(set(columns)) != len(columns):
            duplicated = sorted({c for c in columns if columns.count(c) > 1})
            raise SchemaError(f"feature table has duplicate columns: {duplicated}")
        missing = [c for c in (*META_COLUMNS, *self.feature_columns) if c not in self.frame.columns]
        if missing:
            raise SchemaError(f"feature table is missing columns: {missing}")
        if FLAG_COLUMN not in self.frame.columns:
            self.frame = self.frame.assign(**{FLAG_COLUMN: False})
        self.frame = self.frame[[*META_COLUMNS, *self.feature_columns, FLAG_COLUMN]]

    def __len__(self) -> int:
        return len(self.frame)

    @classmethod
    def empty(cls) -> "FeatureTable":
        frame = pd.DataFrame({column: pd.Series(dtype=object) for column in META_COLUMNS})
        for name in FEATURE_NAMES:
            frame[name] = pd.Series(dtype=np.float64)
        frame[FLAG_COLUMN] = pd.Series(dtype=bool)
        return cls(frame, list(FEATURE_NAMES))

    def matrix(self, columns: Optional[Sequence[str]] = None) -> np.ndarray:
        columns = list(columns) if columns is not None else self.feature_columns
        missing = [c for c in columns if c not in self.frame.columns]
        if missing:
            raise SchemaError(f"feature table is missing columns: {missing}")
        return self.frame[columns].to_numpy(dtype=np.float64)

    def labels(self) -> List[str]:
        return self.frame["label"].astype(str).tolist()

    def keys(self) -> List[Tuple[str, int]]:
        return list(zip(self.frame["parent_id"].astype(str), self.frame["window_index"].astype(int)))

    def partition(self, name: str) -> "FeatureTable":
        rows = self.frame[self.frame["partition"] == name].reset_index(drop=True)
        return FeatureTable(rows, list(self.feature_columns))

    def with_features(self, block: pd.DataFrame) -> "FeatureTable":
        """Append new numeric columns (row-aligned with this table)."""
        clash = [c for c in block.columns if c in self.frame.columns]
        if clash:
            raise SchemaError(f"feature columns already present: {clash[:5]}")
        block = block.set_axis(self.frame.index, axis=0)
        frame = pd.concat([self.frame, block], axis=1)
        return FeatureTable(frame, [*self.feature_columns, *block.columns])

    def check_finite(self) -> None:
        values = self.matrix()
        if values.size and not np.all(np.isfinite(values)):
            row, col = np.argwhere(~np.isfinite(values))[0]
            raise NumericError(
                f"non-finite value in column {self.feature_columns[col]} at row {row}", stage="featurize")

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        frame = self.frame.copy()
        frame[FLAG_COLUMN] = frame[FLAG_COLUMN].astype(int)
        frame.to_csv(path, index=False)
        return path

    @classmethod
    def read_csv(cls, path: Union[str, Path]) -> "FeatureTable":
        path = Path(path)
        try:
            frame = pd.read_csv(
                path,
                dtype={"parent_id": str, "partition": str, "label": str},
                keep_default_na=False,
                float_precision="round_trip",
            )
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise DataError(f"cannot read feature table {path}: {e}")
        missing = [c for c in META_COLUMNS if c not in frame.columns]
        if missing:
            raise SchemaError(f"feature table {path} is missing metadata columns {missing}")
        if FLAG_COLUMN in frame.columns:
            frame[FLAG_COLUMN] = frame[FLAG_COLUMN].astype(bool)
        features = [c for c in frame.columns if c not in META_COLUMNS and c != FLAG_COLUMN]
        return cls(frame, features)


def build_feature_table(vectors: Iterable[FeatureVector]) -> FeatureTable:
    """
    Collect feature vectors into a table ordered by (parent_id, window_index).

    Args:
        vectors: Vectors sharing the FeatureVector schema

    Returns:
        FeatureTable with META_COLUMNS, the fifteen features and the degenerate flag
    """
    vectors = list(vectors)
    if not vectors:
        return FeatureTable.empty()

    for vector in vectors:
        if not isinstance(vector, FeatureVector):
            raise SchemaError(f"expected FeatureVector rows, got {type(vector).__name__}", stage="featurize")

    vectors.sort(key=lambda v: v.key)
    seen = set()
    for vector in vectors:
        if vector.key in seen:
            raise DataError(
                f"duplicate segment ({vector.parent_id}, {vector.window_index}) in feature rows", stage="featurize")
        seen.add(vector.key)

    names = [f.name for f in fields(FeatureVector)]
    frame = pd.DataFrame([asdict(v) for v in vectors], columns=names)
    table = FeatureTable(frame, list(FEATURE_NAMES))
    table.check_finite()
    return table


def featurize_segments(
    segments: Sequence[Segment],
    workers: int = 1,
    show_progress: bool = False,
    dump_dir: Optional[Union[str, Path]] = None,
) -> FeatureTable:
    """
    FFT and feature extraction for every segment.

    Args:
        segments: Segments to featurize
        workers: Thread count
        show_progress: Show a tqdm bar
        dump_dir: If given, write each spectrum as CSV into this directory

    Returns:
        FeatureTable in (parent_id, window_index) order
    """
    if dump_dir is not None:
        Path(dump_dir).mkdir(parents=True, exist_ok=True)

    def featurize(segment: Segment) -> FeatureVector:
        spectrum = fft_magnitude(segment)
        if dump_dir is not None:
            dump_spectrum(spectrum, Path(dump_dir) / f"{segment.parent_id}_w{segment.window_index:04d}.csv")
        return extract_features(spectrum, segment)

    progress = dict(total=len(segments), desc="featurize", unit="seg", disable=not show_progress)
    if workers <= 1:
        vectors = [featurize(segment) for segment in tqdm(segments, **progress)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vectors = list(tqdm(pool.map(featurize, segments), **progress))

    flagged = sum(v.degenerate for v in vectors)
    if flagged:
        logger.warning("%d of %d spectra were degenerate (zero spread or zero level)", flagged, len(vectors))
    return build_feature_table(vectors)
