"""Frequency correlation matrices for one (device, date): PCA denoising of
the binned spectrogram, pairwise Pearson correlation across frequency bins,
block-mean resizing, and image/binary export.
"""

from __future__ import annotations

import csv
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import spectral
from .soundscape import TimeCode

__all__ = [
    "FCM", "PcaModel", "FcmPipelineConfig", "pca_fit", "pca_denoise",
    "pearson", "correlation_matrix", "fcm_for_day", "resize_fcm",
    "export_fcm_image", "write_fcm", "read_fcm", "export_fcm_csv",
]


class DegenerateInputError(ValueError):
    """All PCA input rows are identical; no variance to decompose."""


class InsufficientRecordingsError(ValueError):
    pass


@dataclass
class FCM:
    """Square symmetric correlation matrix over frequency bins."""

    values: np.ndarray
    device_id: str = ""
    date: Optional[TimeCode] = None  # truncated to (t1, t2, t3)
    squared: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        n = self.values.shape[0]
        if self.values.shape != (n, n):
            raise ValueError(f"FCM must be square, got {self.values.shape}")
        if np.abs(self.values - self.values.T).max() > 1e-9:
            raise ValueError("FCM must be symmetric within 1e-9")
        lo = 0.0 if self.squared else -1.0
        if self.values.min() < lo - 1e-9 or self.values.max() > 1.0 + 1e-9:
            raise ValueError("FCM entries out of range")
        if self.date is not None:
            self.date = self.date.date_code()

    @property
    def n_bins(self) -> int:
        return self.values.shape[0]

    def r_squared(self) -> "FCM":
        if self.squared:
            return self
        return FCM(self.values ** 2, self.device_id, self.date, squared=True)


@dataclass
class PcaModel:
    """Centered covariance eigendecomposition, components sorted descending."""

    mean: np.ndarray
    components: np.ndarray  # orthonormal rows
    eigenvalues: np.ndarray  # descending, >= 0
    retained_count: int

    def explained_variance_ratio(self) -> np.ndarray:
        total = self.eigenvalues.sum()
        if total <= 0:
            return np.zeros_like(self.eigenvalues)
        return self.eigenvalues / total


def pca_fit(data: np.ndarray, variance_threshold: float = 0.95) -> PcaModel:
    """Fit PCA on (n_samples, n_features) data.

    ``retained_count`` is the minimal component count whose cumulative
    explained variance reaches the threshold.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValueError("need a 2-D array with at least 2 samples")
    if np.allclose(data, data[0], atol=0.0, rtol=0.0):
        raise DegenerateInputError("all rows identical; covariance is zero")
    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / (data.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    components = eigvecs[:, order].T
    # deterministic sign: largest-magnitude entry of each component positive
    for row in components:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    ratios = eigvals / eigvals.sum() if eigvals.sum() > 0 else eigvals
    cum = np.cumsum(ratios)
    retained = int(np.searchsorted(cum, variance_threshold - 1e-12) + 1)
    retained = min(retained, eigvals.size)
    return PcaModel(mean, components, eigvals, retained)


def pca_denoise(spec: spectral.BinnedSpectrogram,
                variance_threshold: float = 0.95) -> spectral.BinnedSpectrogram:
    """Reconstruct each per-recording bin vector from its leading components.

    Samples are the recordings (columns), features the frequency bins; the
    denoised matrix keeps the original shape and bin geometry.
    """
    if spec.values.shape[1] < 2:
        raise InsufficientRecordingsError(
            "PCA denoising needs at least 2 recordings")
    data = spec.values.T  # (n_recordings, n_bins)
    model = pca_fit(data, variance_threshold)
    lead = model.components[: model.retained_count]
    proj = (data - model.mean) @ lead.T
    recon = proj @ lead + model.mean
    return spectral.BinnedSpectrogram(recon.T, spec.n_bins, spec.bin_width_hz,
                                      list(spec.recordings))


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation; NaN marks the undefined zero-variance case."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("need at least 2 observations")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0.0:
        return float("nan")
    return float(np.clip((xc * yc).sum() / denom, -1.0, 1.0))


def correlation_matrix(rows: np.ndarray) -> np.ndarray:
    """Pairwise Pearson over the rows; undefined entries become 0 off the
    diagonal and 1 on it."""
    rows = np.asarray(rows, dtype=np.float64)
    centered = rows - rows.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered * centered).sum(axis=1))
    ok = norms > 0
    safe = np.where(ok, norms, 1.0)
    unit = centered / safe[:, None]
    corr = unit @ unit.T
    corr[~ok, :] = 0.0
    corr[:, ~ok] = 0.0
    np.fill_diagonal(corr, 1.0)
    corr = np.clip(corr, -1.0, 1.0)
    return (corr + corr.T) / 2.0


@dataclass
class FcmPipelineConfig:
    """Knobs of the per-day recording -> FCM pipeline."""

    n_bins: int = spectral.DEFAULT_N_BINS
    log_eps: float = spectral.DEFAULT_LOG_EPS
    half_spectrum: bool = True
    variance_threshold: float = 0.95
    squared: bool = False
    resize_target: Optional[int] = None


def fcm_for_day(day_recordings: Sequence[Sequence[float]],
                sample_rate: float,
                config: FcmPipelineConfig = FcmPipelineConfig(),
                device_id: str = "",
                date: Optional[TimeCode] = None) -> FCM:
    """Compose the spectral pipeline, PCA denoising, and bin correlation."""
    if len(day_recordings) < 2:
        raise InsufficientRecordingsError(
            f"need >= 2 recordings per day, got {len(day_recordings)}")
    W = spectral.power_spectrum(day_recordings, sample_rate)
    binned = spectral.bin_average(W, config.n_bins, config.half_spectrum)
    spec = spectral.log_transform(binned, config.log_eps,
                                  sample_rate=sample_rate,
                                  half_spectrum=config.half_spectrum)
    try:
        denoised = pca_denoise(spec, config.variance_threshold)
    except DegenerateInputError:
        # identical recordings carry no noise to remove; keep them as-is
        denoised = spec
    corr = correlation_matrix(denoised.values)
    result = FCM(corr, device_id, date, squared=False)
    if config.squared:
        result = result.r_squared()
    if config.resize_target is not None:
        result = resize_fcm(result, config.resize_target)
    return result


def resize_fcm(F: FCM, target: int) -> FCM:
    """Block-mean pooling down to ``target`` bins; symmetry is preserved."""
    n = F.n_bins
    if target > n or n % target != 0:
        raise ValueError(f"target {target} must divide the FCM size {n}")
    b = n // target
    pooled = F.values.reshape(target, b, target, b).mean(axis=(1, 3))
    pooled = (pooled + pooled.T) / 2.0
    return FCM(pooled, F.device_id, F.date, F.squared)


# ----------------------------------------------------------------------
# image export: 8-bit grayscale PGM, optional PNG
# ----------------------------------------------------------------------

def _to_pixels(F: FCM) -> np.ndarray:
    vals = F.values if F.squared else F.values ** 2
    return np.round(255.0 * np.clip(vals, 0.0, 1.0)).astype(np.uint8)


def export_fcm_image(F: FCM, path) -> None:
    """Map [0, 1] squared correlations linearly onto [0, 255] gray levels."""
    path = Path(path)
    pix = _to_pixels(F)
    if path.suffix.lower() == ".png":
        path.write_bytes(_encode_png_gray(pix))
    else:
        header = f"P5\n{pix.shape[1]} {pix.shape[0]}\n255\n".encode("ascii")
        path.write_bytes(header + pix.tobytes())


def _encode_png_gray(pix: np.ndarray) -> bytes:
    h, w = pix.shape
    raw = b"".join(b"\x00" + pix[i].tobytes() for i in range(h))

    def chunk(tag: bytes, payload: bytes) -> bytes:
        return (struct.pack(">I", len(payload)) + tag + payload
                + struct.pack(">I", zlib.crc32(tag + payload)))

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr)
            + chunk(b"IDAT", zlib.compress(raw, 9)) + chunk(b"IEND", b""))


# ----------------------------------------------------------------------
# binary persistence: "GASTF" magic
# ----------------------------------------------------------------------

_MAGIC = b"GASTF"


def write_fcm(path, F: FCM) -> None:
    date = F.date or TimeCode(1970, 1, 1)
    dev = F.device_id.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IB", F.n_bins, 1 if F.squared else 0))
        fh.write(struct.pack("<I", len(dev)))
        fh.write(dev)
        fh.write(struct.pack("<III", date.t1, date.t2, date.t3))
        fh.write(np.ascontiguousarray(F.values, dtype="<f8").tobytes())


def read_fcm(path) -> FCM:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: bad magic, not an FCM file")
        n, squared = struct.unpack("<IB", fh.read(5))
        (dlen,) = struct.unpack("<I", fh.read(4))
        dev = fh.read(dlen).decode("utf-8")
        t1, t2, t3 = struct.unpack("<III", fh.read(12))
        data = np.frombuffer(fh.read(8 * n * n), dtype="<f8")
        if data.size != n * n:
            raise ValueError(f"{path}: truncated payload")
    return FCM(np.array(data).reshape(n, n), dev, TimeCode(t1, t2, t3),
               bool(squared))


def export_fcm_csv(path, F: FCM) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in F.values:
            writer.writerow([repr(float(v)) for v in row])
