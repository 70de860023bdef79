"""Signal synthesis tests: isolated signals, modulation, mixing, WAV I/O,
and the reproducible corpus renderer."""

import hashlib
from pathlib import Path

import numpy as np
import pytest

from gastkit.soundscape import read_manifest
from gastkit.synthesis import (
    AliasingError, MalformedWavError, ModulationSpec, NoiseSpec,
    _noise_vector, apply_modulation, default_scenario,
    generate_isolated_signal, read_wav, sensor_mix, synthesize_corpus,
    write_wav,
)


class TestIsolatedSignals:
    def test_sine_length_and_peak(self):
        sig = generate_isolated_signal(
            "sine", {"freq": 1000.0, "amp": 1.0}, 1.0, 8000.0)
        x = sig.as_array()
        assert x.size == 8000
        assert np.isclose(np.abs(x).max(), 1.0, atol=1e-6)

    def test_sine_aliasing(self):
        with pytest.raises(AliasingError):
            generate_isolated_signal("sine", {"freq": 5000.0}, 1.0, 8000.0)

    def test_harmonic_stack_peaks(self):
        # oracle: FFT magnitude of the generated signal peaks at f0 multiples
        sig = generate_isolated_signal(
            "harmonic_stack", {"f0": 250.0, "harmonics": 3}, 1.0, 8000.0)
        mag = np.abs(np.fft.rfft(sig.as_array()))
        mag[0] = 0.0
        peaks = set(np.argsort(mag)[-3:])
        assert peaks == {250, 500, 750}

    def test_harmonic_stack_aliasing_on_overtones(self):
        with pytest.raises(AliasingError):
            generate_isolated_signal(
                "harmonic_stack", {"f0": 1500.0, "harmonics": 3}, 1.0, 8000.0)

    def test_chirp_and_noise_burst_deterministic(self):
        a = generate_isolated_signal("noise_burst", {"amp": 0.3, "seed": 5},
                                     0.5, 8000.0)
        b = generate_isolated_signal("noise_burst", {"amp": 0.3, "seed": 5},
                                     0.5, 8000.0)
        assert a.samples == b.samples
        c = generate_isolated_signal("chirp", {"f0": 100.0, "f1": 900.0},
                                     0.5, 8000.0)
        assert len(c.samples) == 4000

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            generate_isolated_signal("square", {}, 1.0, 8000.0)


class TestModulation:
    def _sig(self):
        return generate_isolated_signal("sine", {"freq": 500.0}, 0.25, 8000.0)

    def test_identity(self):
        sig = self._sig()
        out = apply_modulation(sig, ModulationSpec())
        assert out.samples == sig.samples

    def test_zero_gain(self):
        out = apply_modulation(self._sig(), ModulationSpec(gain=0.0))
        assert np.all(out.as_array() == 0.0)

    def test_gain_cancels_distance(self):
        sig = self._sig()
        out = apply_modulation(sig, ModulationSpec(gain=2.0, distance_m=2.0))
        np.testing.assert_allclose(out.as_array(), sig.as_array(), atol=1e-12)

    def test_subunit_distance_clamped(self):
        sig = self._sig()
        out = apply_modulation(sig, ModulationSpec(gain=1.0, distance_m=0.5))
        np.testing.assert_allclose(out.as_array(), sig.as_array(), atol=1e-12)

    def test_band_filter_removes_out_of_band_tone(self):
        sig = self._sig()  # 500 Hz
        out = apply_modulation(sig, ModulationSpec(band=(1000.0, 2000.0)),
                               sample_rate=8000.0)
        assert np.abs(out.as_array()).max() < 1e-10
        kept = apply_modulation(sig, ModulationSpec(band=(100.0, 2000.0)),
                                sample_rate=8000.0)
        assert np.abs(kept.as_array()).max() > 0.5

    def test_invalid_specs(self):
        with pytest.raises(ValueError):
            ModulationSpec(gain=-1.0)
        with pytest.raises(ValueError):
            ModulationSpec(band=(200.0, 100.0))


class TestSensorMix:
    def test_single_signal_identity(self):
        sig = generate_isolated_signal("sine", {"freq": 440.0, "amp": 0.4},
                                       0.5, 8000.0)
        out = sensor_mix([sig], [], NoiseSpec(amplitude=0.0), 4000)
        np.testing.assert_allclose(out, sig.as_array(), atol=1e-12)

    def test_noise_std(self):
        # derived: seeded generator statistics over 1e5 samples
        out = sensor_mix([], [], NoiseSpec("white", 0.05, seed=3), 100_000)
        assert abs(out.std() - 0.05) / 0.05 < 0.10

    def test_two_sines_double(self):
        sig = generate_isolated_signal("sine", {"freq": 440.0, "amp": 0.3},
                                       0.5, 8000.0)
        out = sensor_mix([sig, sig], [], NoiseSpec(amplitude=0.0), 4000)
        np.testing.assert_allclose(out, 2.0 * sig.as_array(), atol=1e-12)

    def test_linearity_before_clipping(self):
        a = generate_isolated_signal("sine", {"freq": 300.0, "amp": 0.2},
                                     0.5, 8000.0)
        b = generate_isolated_signal("sine", {"freq": 700.0, "amp": 0.2},
                                     0.5, 8000.0)
        quiet = NoiseSpec(amplitude=0.0)
        both = sensor_mix([a, b], [], quiet, 4000)
        np.testing.assert_allclose(
            both,
            sensor_mix([a], [], quiet, 4000) + sensor_mix([b], [], quiet, 4000),
            atol=1e-12)

    def test_clipping(self):
        sig = generate_isolated_signal("sine", {"freq": 440.0, "amp": 3.0},
                                       0.1, 8000.0)
        out = sensor_mix([sig], [], NoiseSpec(amplitude=0.0), 800)
        assert out.max() <= 1.0 and out.min() >= -1.0
        assert np.isclose(out.max(), 1.0)

    def test_zero_padding(self):
        sig = generate_isolated_signal("sine", {"freq": 440.0, "amp": 0.5},
                                       0.1, 8000.0)
        out = sensor_mix([sig], [], NoiseSpec(amplitude=0.0), 1600)
        assert np.all(out[800:] == 0.0)

    def test_pink_noise_slope(self):
        # spectral slope of pink noise: power halves per octave (~-3 dB)
        n = 1 << 16
        x = _noise_vector(NoiseSpec("pink", 1.0, seed=0), n)
        mag2 = np.abs(np.fft.rfft(x)) ** 2
        freqs = np.fft.rfftfreq(n)
        def band_power(lo, hi):
            sel = (freqs >= lo) & (freqs < hi)
            return mag2[sel].mean()
        # mean power density ratio across one octave should be ~2 (+/- 1 dB)
        ratio = band_power(0.01, 0.02) / band_power(0.02, 0.04)
        assert 10 * np.log10(ratio) == pytest.approx(3.0, abs=1.0)
        assert x.std() == pytest.approx(1.0, rel=1e-9)


class TestWavIO:
    def test_round_trip_quantization_bound(self, tmp_path):
        sig = generate_isolated_signal("sine", {"freq": 440.0, "amp": 0.9},
                                       1.0, 8000.0)
        path = tmp_path / "x.wav"
        write_wav(path, sig.as_array(), 8000.0)
        back, rate = read_wav(path)
        assert rate == 8000.0
        assert np.abs(back - sig.as_array()).max() <= 2.0 ** -15

    def test_44100_rate_preserved(self, tmp_path):
        path = tmp_path / "hi.wav"
        write_wav(path, np.zeros(100), 44100.0)
        _, rate = read_wav(path)
        assert rate == 44100.0

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "bad.wav"
        path.write_bytes(b"RIFF\x00\x00")
        with pytest.raises(MalformedWavError):
            read_wav(path)

    def test_unsupported_depth(self, tmp_path):
        with pytest.raises(ValueError):
            write_wav(tmp_path / "x.wav", np.zeros(10), 8000.0, bit_depth=24)


def _tiny_scenario(**kw):
    base = dict(n_classes=2, devices_per_class=1, days=2,
                recordings_per_day=3, recording_seconds=0.25,
                sample_rate=4000.0, seed=7)
    base.update(kw)
    return default_scenario(**base)


def _tree_hash(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


class TestCorpus:
    def test_file_and_row_counts(self, tmp_path):
        config = _tiny_scenario()
        rows = synthesize_corpus(config, tmp_path / "c")
        expected = 2 * 1 * 2 * 3
        assert len(rows) == expected
        assert len(list((tmp_path / "c").rglob("*.wav"))) == expected
        assert len(read_manifest(tmp_path / "c" / "manifest.csv")) == expected

    def test_layout(self, tmp_path):
        synthesize_corpus(_tiny_scenario(), tmp_path / "c")
        wavs = sorted((tmp_path / "c").rglob("*.wav"))
        rel = wavs[0].relative_to(tmp_path / "c")
        parts = rel.parts
        assert parts[0].startswith("device_")
        assert len(parts[1].split("-")) == 3  # yyyy-mm-dd
        assert len(parts[2]) == len("hhmm.wav")

    def test_byte_identical_reruns(self, tmp_path):
        synthesize_corpus(_tiny_scenario(), tmp_path / "a")
        synthesize_corpus(_tiny_scenario(), tmp_path / "b")
        assert _tree_hash(tmp_path / "a") == _tree_hash(tmp_path / "b")

    def test_seed_changes_output(self, tmp_path):
        synthesize_corpus(_tiny_scenario(seed=1), tmp_path / "a")
        synthesize_corpus(_tiny_scenario(seed=2), tmp_path / "b")
        assert _tree_hash(tmp_path / "a") != _tree_hash(tmp_path / "b")

    def test_weekend_gain_halves_rms(self, tmp_path):
        # class 1 carries weekend_gain 0.5 on its co-varying pair; compare
        # the RMS of weekday vs weekend renders with noise disabled
        config = default_scenario(
            n_classes=1, devices_per_class=1, days=9, recordings_per_day=6,
            recording_seconds=0.25, sample_rate=4000.0, seed=3,
            noise_amplitude=0.0, comodulation=(1.0, 1.0),
            fingerprint_tones=0, fingerprint_level_jitter=0.0,
            start_date=(2019, 5, 6))  # Monday start
        rows = synthesize_corpus(config, tmp_path / "c")
        weekday_rms, weekend_rms = [], []
        for row in rows:
            x, _ = read_wav(tmp_path / "c" / row.wav_path)
            rms = np.sqrt((x ** 2).mean())
            is_weekend = row.time_code.date().weekday() >= 5
            (weekend_rms if is_weekend else weekday_rms).append(rms)
        assert weekend_rms and weekday_rms
        # two of three tones are halved on weekends; power ratio oracle:
        # weekday per-tone power a^2/2 each; weekend (a/2)^2/2 on the pair
        amps = [c.amp * (c.weekend_gain if wk else 1.0)
                for wk in (False, True)
                for c in config.classes[0].components]
        day_p = sum(a * a / 2 for a in amps[:3])
        end_p = sum(a * a / 2 for a in amps[3:])
        expected = np.sqrt(end_p / day_p)
        ratio = np.mean(weekend_rms) / np.mean(weekday_rms)
        assert ratio == pytest.approx(expected, rel=0.05)

    def test_device_fingerprints_differ(self, tmp_path):
        config = _tiny_scenario(devices_per_class=2)
        rows = synthesize_corpus(config, tmp_path / "c")
        by_dev = {}
        for row in rows:
            by_dev.setdefault(row.device_id, row)
        ids = sorted(by_dev)
        a, _ = read_wav(tmp_path / "c" / by_dev[ids[0]].wav_path)
        b, _ = read_wav(tmp_path / "c" / by_dev[ids[1]].wav_path)
        assert not np.array_equal(a, b)
