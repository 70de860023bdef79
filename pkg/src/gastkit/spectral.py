"""Per-day spectral pipeline: normalized DFT, magnitude spectra, uniform
frequency binning, and the log transform that yields the binned spectrogram
matrix consumed by the correlation stage.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .soundscape import TimeCode

__all__ = [
    "PowerSpectrumMatrix", "BinnedSpectrogram",
    "dft_spectrum", "power_spectrum", "bin_average", "log_transform",
    "write_binned", "read_binned", "export_binned_csv",
]

DEFAULT_N_BINS = 1024
DEFAULT_LOG_EPS = 1e-12


class EmptyInputError(ValueError):
    pass


class LengthMismatchError(ValueError):
    pass


class TooFewRowsError(ValueError):
    pass


@dataclass
class PowerSpectrumMatrix:
    """Magnitude spectra, one column per recording, DC row excluded."""

    values: np.ndarray  # (M-1, n_r)
    sample_rate: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if np.any(self.values < 0):
            raise ValueError("magnitude spectra must be non-negative")

    @property
    def n_recordings(self) -> int:
        return self.values.shape[1]


@dataclass
class BinnedSpectrogram:
    """Log-scaled bins x recordings matrix."""

    values: np.ndarray
    n_bins: int
    bin_width_hz: float
    recordings: List[TimeCode] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape[0] != self.n_bins:
            raise ValueError(
                f"matrix has {self.values.shape[0]} rows, expected {self.n_bins}")


def dft_spectrum(recording: Sequence[float]) -> np.ndarray:
    """Normalized discrete Fourier transform F(u) = (1/M) sum phi(j) e^{-2pi i ju/M}."""
    x = np.asarray(recording, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise EmptyInputError("recording must be a vector of length >= 2")
    return np.fft.fft(x) / x.size


def power_spectrum(day_recordings: Sequence[Sequence[float]],
                   sample_rate: float) -> PowerSpectrumMatrix:
    """Column-stack |F(u)| for u in 1..M-1 over one day's recordings."""
    recs = [np.asarray(r, dtype=np.float64) for r in day_recordings]
    if not recs:
        raise EmptyInputError("no recordings")
    m = recs[0].size
    for i, r in enumerate(recs):
        if r.size != m:
            raise LengthMismatchError(
                f"recording {i} has length {r.size}, expected {m}")
    block = np.stack(recs, axis=1)  # (M, n_r)
    spec = np.fft.fft(block, axis=0) / m
    return PowerSpectrumMatrix(np.abs(spec[1:, :]), sample_rate)


def bin_average(W: PowerSpectrumMatrix, n_bins: int = DEFAULT_N_BINS,
                half_spectrum: bool = True) -> np.ndarray:
    """Uniform-bin mean of the magnitude rows.

    ``half_spectrum`` keeps only frequencies up to Nyquist before binning,
    so with a 44.1 kHz rate and 1024 bins each bin spans ~21.5 Hz.  Rows
    that do not fill a whole bin are folded into the last bin by mean.
    """
    rows = W.values
    if half_spectrum:
        m = rows.shape[0] + 1  # original M
        rows = rows[: m // 2, :]
    if rows.shape[0] < n_bins:
        raise TooFewRowsError(
            f"{rows.shape[0]} spectral rows cannot fill {n_bins} bins")
    b = rows.shape[0] // n_bins
    out = np.empty((n_bins, rows.shape[1]), dtype=np.float64)
    body = rows[: (n_bins - 1) * b, :].reshape(n_bins - 1, b, -1)
    out[:-1, :] = body.mean(axis=1)
    out[-1, :] = rows[(n_bins - 1) * b:, :].mean(axis=0)
    return out


def bin_width_hz(sample_rate: float, n_bins: int,
                 half_spectrum: bool = True) -> float:
    span = sample_rate / 2.0 if half_spectrum else sample_rate
    return span / n_bins


def log_transform(binned: np.ndarray, eps: float = DEFAULT_LOG_EPS, *,
                  sample_rate: float, n_bins: Optional[int] = None,
                  half_spectrum: bool = True,
                  recordings: Optional[List[TimeCode]] = None) -> BinnedSpectrogram:
    """Elementwise ln(x + eps), packaged with its bin geometry."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    binned = np.asarray(binned, dtype=np.float64)
    n_bins = binned.shape[0] if n_bins is None else n_bins
    return BinnedSpectrogram(
        np.log(binned + eps), n_bins,
        bin_width_hz(sample_rate, n_bins, half_spectrum),
        recordings or [])


# ----------------------------------------------------------------------
# persistence: little-endian binary with "GASTW" magic, plus CSV export
# ----------------------------------------------------------------------

_MAGIC = b"GASTW"


def write_binned(path, spec: BinnedSpectrogram) -> None:
    rows, cols = spec.values.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IId", rows, cols, spec.bin_width_hz))
        fh.write(np.ascontiguousarray(spec.values, dtype="<f8").tobytes())


def read_binned(path) -> BinnedSpectrogram:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: bad magic, not a binned-spectrogram file")
        rows, cols, width = struct.unpack("<IId", fh.read(16))
        data = np.frombuffer(fh.read(8 * rows * cols), dtype="<f8")
        if data.size != rows * cols:
            raise ValueError(f"{path}: truncated payload")
        return BinnedSpectrogram(np.array(data).reshape(rows, cols),
                                 rows, width)


def export_binned_csv(path, spec: BinnedSpectrogram) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["bin"] + [f"r{i}" for i in range(spec.values.shape[1])]
        writer.writerow(header)
        for i, row in enumerate(spec.values):
            writer.writerow([i] + [repr(float(v)) for v in row])
