"""Generative realization of the sensor function: modulated isolated
signals mixed with per-recording noise, rendered to a reproducible on-disk
corpus of 16-bit WAV files plus a dataset manifest.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .soundscape import (LandUseClass, ManifestRow, SourceCategory,
                         SourceSignal, TimeCode, write_manifest)

__all__ = [
    "ModulationSpec", "NoiseSpec", "ToneComponent", "ClassSpec",
    "ScenarioConfig", "generate_isolated_signal", "apply_modulation",
    "sensor_mix", "synthesize_corpus", "write_wav", "read_wav",
    "default_scenario", "AliasingError", "SampleRateMismatchError",
    "MalformedWavError",
]


class AliasingError(ValueError):
    """A requested frequency is at or above Nyquist."""


class SampleRateMismatchError(ValueError):
    pass


class MalformedWavError(ValueError):
    pass


@dataclass(frozen=True)
class ModulationSpec:
    """Per-source modulation: gain, inverse-distance attenuation, pass band."""

    gain: float = 1.0
    distance_m: Optional[float] = None
    band: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.gain < 0:
            raise ValueError("gain must be >= 0")
        if self.band is not None and not self.band[0] < self.band[1]:
            raise ValueError("band must satisfy low < high")


@dataclass(frozen=True)
class NoiseSpec:
    """Additive per-recording noise: white or pink, given amplitude and seed."""

    kind: str = "white"
    amplitude: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("white", "pink"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")


@dataclass(frozen=True)
class ToneComponent:
    """One spectral component of a class signature.

    Components sharing a ``group`` id receive the same per-recording random
    level, so their frequency bins co-vary across a day; distinct groups
    toggle independently.
    """

    freq_hz: float
    amp: float
    group: int = 0
    weekday_gain: float = 1.0
    weekend_gain: float = 1.0


@dataclass(frozen=True)
class ClassSpec:
    land_use: LandUseClass
    components: Tuple[ToneComponent, ...]


@dataclass
class ScenarioConfig:
    """Desk-scale synthetic corpus description."""

    classes: List[ClassSpec]
    devices_per_class: int = 2
    days: int = 14
    recordings_per_day: int = 12
    recording_seconds: float = 1.0
    sample_rate: float = 8000.0
    seed: int = 0
    start_date: Tuple[int, int, int] = (2019, 5, 6)  # a Monday
    noise_amplitude: float = 0.01
    noise_kind: str = "white"
    # per-recording co-modulation level range shared within a component group
    comodulation: Tuple[float, float] = (0.4, 1.0)
    # device fingerprint knobs
    fingerprint_freq_jitter: float = 0.1
    fingerprint_tones: int = 2
    fingerprint_level_jitter: float = 0.2

    def __post_init__(self):
        if not self.classes:
            raise ValueError("scenario needs at least one class")
        for name in ("devices_per_class", "days", "recordings_per_day"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.recording_seconds <= 0 or self.sample_rate <= 0:
            raise ValueError("recording_seconds and sample_rate must be positive")


# ----------------------------------------------------------------------
# isolated signals and modulation
# ----------------------------------------------------------------------

def _check_nyquist(freqs: Sequence[float], sample_rate: float) -> None:
    for f in freqs:
        if f >= sample_rate / 2.0:
            raise AliasingError(
                f"frequency {f} Hz >= Nyquist {sample_rate / 2.0} Hz")


def generate_isolated_signal(kind: str, params: dict, duration_s: float,
                             sample_rate: float,
                             time_code: TimeCode = TimeCode(2019, 5, 6),
                             category: SourceCategory = SourceCategory.UNLABELED,
                             label: str = "") -> SourceSignal:
    """Deterministically build an isolated source signal.

    Kinds: ``sine`` (freq, amp, phase), ``harmonic_stack`` (f0, harmonics,
    amp), ``chirp`` (f0, f1, amp), ``noise_burst`` (amp, seed).
    """
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    if kind == "sine":
        freq = params["freq"]
        _check_nyquist([freq], sample_rate)
        x = params.get("amp", 1.0) * np.sin(
            2 * np.pi * freq * t + params.get("phase", 0.0))
    elif kind == "harmonic_stack":
        f0 = params["f0"]
        k = int(params.get("harmonics", 3))
        _check_nyquist([f0 * i for i in range(1, k + 1)], sample_rate)
        amp = params.get("amp", 1.0)
        x = np.zeros(n)
        for i in range(1, k + 1):
            x += (amp / i) * np.sin(2 * np.pi * f0 * i * t)
    elif kind == "chirp":
        f0, f1 = params["f0"], params["f1"]
        _check_nyquist([f0, f1], sample_rate)
        phase = 2 * np.pi * (f0 * t + (f1 - f0) * t * t / (2 * duration_s))
        x = params.get("amp", 1.0) * np.sin(phase)
    elif kind == "noise_burst":
        rng = np.random.default_rng(params.get("seed", 0))
        x = params.get("amp", 1.0) * rng.standard_normal(n)
    else:
        raise ValueError(f"unknown signal kind {kind!r}")
    return SourceSignal(tuple(x), time_code, category, label)


def apply_modulation(signal: SourceSignal, spec: ModulationSpec,
                     sample_rate: Optional[float] = None) -> SourceSignal:
    """Apply gain, inverse-distance attenuation, and optional band filtering."""
    x = signal.as_array()
    scale = spec.gain
    if spec.distance_m is not None:
        scale /= max(spec.distance_m, 1.0)
    x = x * scale
    if spec.band is not None:
        if sample_rate is None:
            raise ValueError("band filtering requires a sample rate")
        spec_f = np.fft.rfft(x)
        freqs = np.fft.rfftfreq(x.size, 1.0 / sample_rate)
        mask = (freqs >= spec.band[0]) & (freqs <= spec.band[1])
        x = np.fft.irfft(spec_f * mask, n=x.size)
    return SourceSignal(tuple(x), signal.time_code, signal.category,
                        signal.label)


def _noise_vector(spec: NoiseSpec, n: int,
                  rng: Optional[np.random.Generator] = None) -> np.ndarray:
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    white = rng.standard_normal(n)
    if spec.kind == "white":
        return spec.amplitude * white
    # pink: shape white noise by 1/sqrt(f) in the frequency domain, then
    # renormalize so the sample std equals the requested amplitude
    spec_f = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n)
    weights = np.ones_like(freqs)
    weights[1:] = 1.0 / np.sqrt(freqs[1:])
    weights[0] = 0.0
    pink = np.fft.irfft(spec_f * weights, n=n)
    std = pink.std()
    if std > 0:
        pink *= spec.amplitude / std
    return pink


def sensor_mix(signals: Sequence[SourceSignal],
               modulations: Sequence[ModulationSpec],
               noise: NoiseSpec, length_samples: int,
               sample_rate: Optional[float] = None,
               rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Sum the modulated signals plus one noise realization, clipped to [-1, 1].

    Shorter signals are zero-padded to ``length_samples``.
    """
    if length_samples <= 0:
        raise ValueError("length_samples must be positive")
    if len(modulations) not in (0, len(signals)):
        raise ValueError("modulations must match signals one-to-one (or be empty)")
    out = np.zeros(length_samples, dtype=np.float64)
    for i, sig in enumerate(signals):
        mod = modulations[i] if modulations else ModulationSpec()
        x = apply_modulation(sig, mod, sample_rate).as_array()
        if x.size > length_samples:
            raise SampleRateMismatchError(
                f"signal {i} has {x.size} samples, exceeds mix length "
                f"{length_samples}")
        out[: x.size] += x
    out += _noise_vector(noise, length_samples, rng)
    return np.clip(out, -1.0, 1.0)


# ----------------------------------------------------------------------
# WAV I/O (16-bit mono PCM)
# ----------------------------------------------------------------------

def write_wav(path, samples: np.ndarray, sample_rate: float,
              bit_depth: int = 16) -> None:
    if bit_depth != 16:
        raise ValueError("only 16-bit PCM is supported")
    q = np.round(np.clip(np.asarray(samples), -1.0, 1.0) * 32767.0)
    q = q.astype("<i2")
    try:
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(1)
            wf.setsampwidth(2)
            wf.setframerate(int(round(sample_rate)))
            wf.writeframes(q.tobytes())
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc


def read_wav(path) -> Tuple[np.ndarray, float]:
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getnchannels() != 1 or wf.getsampwidth() != 2:
                raise MalformedWavError(
                    f"{path}: expected 16-bit mono PCM")
            rate = float(wf.getframerate())
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise MalformedWavError(f"{path}: {exc}") from exc
    except EOFError as exc:
        raise MalformedWavError(f"{path}: truncated file") from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0
    return samples, rate


# ----------------------------------------------------------------------
# corpus synthesis
# ----------------------------------------------------------------------

def _slot_time(day_date, slot: int, per_day: int) -> TimeCode:
    hour = (slot * 24) // per_day
    minute = (0, 20, 40)[slot % 3]
    return TimeCode(day_date.year, day_date.month, day_date.day, hour, minute)


@dataclass(frozen=True)
class _DeviceProfile:
    """Per-device acoustic fingerprint, fixed for the corpus lifetime."""

    freq_factors: Tuple[float, ...]   # jitter on each class component
    extra_freqs: Tuple[float, ...]
    extra_amps: Tuple[float, ...]
    level: float
    utm: Tuple[float, float]


def _device_profile(config: ScenarioConfig, cls: ClassSpec,
                    device_index: int) -> _DeviceProfile:
    rng = np.random.default_rng(
        np.random.SeedSequence((config.seed, device_index, 0xF1)))
    j = config.fingerprint_freq_jitter
    factors = tuple(rng.uniform(1.0 - j, 1.0 + j)
                    for _ in cls.components)
    nyq = config.sample_rate / 2.0
    extra_freqs = tuple(rng.uniform(0.05 * nyq, 0.9 * nyq)
                        for _ in range(config.fingerprint_tones))
    base_amp = (np.mean([c.amp for c in cls.components])
                if cls.components else 0.05)
    extra_amps = tuple(float(base_amp) * rng.uniform(0.5, 1.0)
                       for _ in range(config.fingerprint_tones))
    level = rng.uniform(1.0 - config.fingerprint_level_jitter,
                        1.0 + config.fingerprint_level_jitter)
    utm = (float(370000.0 + rng.uniform(0, 10000)),
           float(5700000.0 + rng.uniform(0, 10000)))
    return _DeviceProfile(factors, extra_freqs, extra_amps, level, utm)


def _render_day(config: ScenarioConfig, cls: ClassSpec,
                profile: _DeviceProfile, device_index: int,
                day_index: int) -> List[Tuple[TimeCode, np.ndarray]]:
    """All recordings of one (device, day); owns its derived generator."""
    import datetime as _dt

    rng = np.random.default_rng(
        np.random.SeedSequence((config.seed, device_index, day_index)))
    day_date = (_dt.date(*config.start_date)
                + _dt.timedelta(days=day_index))
    weekend = day_date.weekday() >= 5
    n = int(round(config.recording_seconds * config.sample_rate))
    t = np.arange(n) / config.sample_rate
    lo, hi = config.comodulation
    out = []
    groups = sorted({c.group for c in cls.components})
    n_extra = len(profile.extra_freqs)
    for slot in range(config.recordings_per_day):
        tc = _slot_time(day_date, slot, config.recordings_per_day)
        scales = {g: rng.uniform(lo, hi) for g in groups}
        extra_scales = rng.uniform(lo, hi, size=n_extra)
        x = np.zeros(n)
        for comp, factor in zip(cls.components, profile.freq_factors):
            gain = comp.weekend_gain if weekend else comp.weekday_gain
            amp = comp.amp * gain * scales[comp.group] * profile.level
            freq = min(comp.freq_hz * factor, 0.999 * config.sample_rate / 2)
            x += amp * np.sin(2 * np.pi * freq * t
                              + rng.uniform(0, 2 * np.pi))
        for k in range(n_extra):
            x += (profile.extra_amps[k] * extra_scales[k] * profile.level
                  * np.sin(2 * np.pi * profile.extra_freqs[k] * t
                           + rng.uniform(0, 2 * np.pi)))
        x += _noise_vector(
            NoiseSpec(config.noise_kind, config.noise_amplitude), n, rng)
        out.append((tc, np.clip(x, -1.0, 1.0)))
    return out


def synthesize_corpus(config: ScenarioConfig, out_dir) -> List[ManifestRow]:
    """Render the whole corpus to ``out_dir`` and write its manifest.

    Layout: ``device_<id>/<t1>-<t2>-<t3>/<t4><t5>.wav``.  Fully reproducible
    from the scenario seed; each (device, day) owns an independent derived
    generator, so serial and parallel rendering agree.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows: List[ManifestRow] = []
    device_index = 0
    for cls in config.classes:
        for _ in range(config.devices_per_class):
            device_id = f"dev{device_index:02d}"
            profile = _device_profile(config, cls, device_index)
            for day_index in range(config.days):
                recs = _render_day(config, cls, profile, device_index,
                                   day_index)
                for tc, samples in recs:
                    rel = (f"device_{device_id}/"
                           f"{tc.t1}-{tc.t2:02d}-{tc.t3:02d}/"
                           f"{tc.t4:02d}{tc.t5:02d}.wav")
                    path = out_dir / rel
                    path.parent.mkdir(parents=True, exist_ok=True)
                    write_wav(path, samples, config.sample_rate)
                    rows.append(ManifestRow(
                        device_id, profile.utm[0], profile.utm[1],
                        cls.land_use.id, rel, tc))
            device_index += 1
    write_manifest(out_dir / "manifest.csv", rows)
    return rows


def default_scenario(n_classes: int = 9, **overrides) -> ScenarioConfig:
    """Distinct tone signatures per land-use class, desk-scale defaults.

    Each class gets a co-varying tone pair (shared group) plus one
    independent tone, at class-specific frequencies, with weekend gain
    profiles differing across classes.
    """
    classes = []
    sample_rate = overrides.get("sample_rate", 8000.0)
    lo = 0.05 * sample_rate
    step = (0.40 * sample_rate - lo) / max(n_classes, 1)
    for cid in range(1, n_classes + 1):
        base = lo + step * (cid - 1)
        weekend = 0.5 if cid % 2 else 1.0
        comps = (
            ToneComponent(base, 0.12, group=0, weekend_gain=weekend),
            ToneComponent(base + 0.40 * step, 0.12, group=0,
                          weekend_gain=weekend),
            ToneComponent(base + 0.75 * step, 0.10, group=1),
        )
        classes.append(ClassSpec(LandUseClass(cid), comps))
    return ScenarioConfig(classes=classes, **overrides)
