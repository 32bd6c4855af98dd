"""
Frequency-domain transform of signal windows.
Windows are zero-padded to the next power of two and passed through an
iterative radix-2 decimation-in-time FFT; the one-sided magnitude spectrum
is what feature extraction consumes.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from pipeline_errors import DataError
from signal_dataset import check_finite
from sliding_window import Segment


@dataclass(frozen=True, eq=False)
class Spectrum:
    """
    One-sided magnitude spectrum |X_k|, k = 0..fft_length/2.

    Attributes:
        magnitudes: Non-negative bin magnitudes
        bin_hz: Frequency resolution, sample_rate / fft_length
        fft_length: Transform length after zero padding
        sample_count: Samples in the window before padding
    """

    magnitudes: np.ndarray
    bin_hz: float
    fft_length: int
    sample_count: int

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(self.magnitudes.size) * self.bin_hz

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "bin": np.arange(self.magnitudes.size),
            "frequency_hz": self.frequencies,
            "magnitude": self.magnitudes,
        })


def next_power_of_two(n: int) -> int:
    if n < 1:
        raise DataError("transform length must be at least 1", stage="spectrum")
    return 1 << (n - 1).bit_length()


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    index = np.arange(n)
    reversed_index = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        reversed_index |= ((index >> b) & 1) << (bits - 1 - b)
    return reversed_index


def radix2_fft(x: np.ndarray) -> np.ndarray:
    """
    Full complex DFT of a power-of-two length input.

    Each stage applies all butterflies of that stage at once on a
    (blocks, size) view of the working buffer.
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.size
    if n == 0 or n & (n - 1):
        raise DataError(f"radix-2 transform needs a power-of-two length, got {n}", stage="spectrum")
    if n == 1:
        return x.copy()

    out = x[_bit_reverse_indices(n)]
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = out.reshape(-1, size)
        even = blocks[:, :half].copy()
        odd = blocks[:, half:] * twiddle
        blocks[:, :half] = even + odd
        blocks[:, half:] = even - odd
        size <<= 1
    return out


def magnitude_spectrum(samples: np.ndarray, sample_rate: float = 1.0) -> Spectrum:
    """One-sided magnitude spectrum of a raw sample array."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1 or samples.size == 0:
        raise DataError("cannot transform an empty window", stage="spectrum")
    check_finite(samples, "window", stage="spectrum")

    fft_length = next_power_of_two(samples.size)
    padded = np.zeros(fft_length, dtype=np.float64)
    padded[: samples.size] = samples
    full = radix2_fft(padded)
    return Spectrum(
        magnitudes=np.abs(full[: fft_length // 2 + 1]),
        bin_hz=sample_rate / fft_length,
        fft_length=fft_length,
        sample_count=samples.size,
    )


def fft_magnitude(segment: Segment) -> Spectrum:
    """Transform one segment into its one-sided magnitude spectrum."""
    try:
        return magnitude_spectrum(segment.samples, segment.sample_rate)
    except DataError as e:
        raise DataError(f"segment {segment.parent_id}#{segment.window_index}: {e.message}", stage="spectrum")


def dump_spectrum(spectrum: Spectrum, path: Union[str, Path]) -> Path:
    """Write bin, frequency_hz, magnitude CSV for inspection."""
    path = Path(path)
    spectrum.to_frame().to_csv(path, index=False)
    return path
