"""Spectral pipeline tests: normalized transform vs the naive sum,
magnitude spectra, uniform binning, and the log transform."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gastkit.spectral import (
    BinnedSpectrogram, EmptyInputError, LengthMismatchError, TooFewRowsError,
    bin_average, bin_width_hz, dft_spectrum, export_binned_csv, log_transform,
    power_spectrum, read_binned, write_binned,
)


class TestDft:
    def test_constant_signal_dc_only(self):
        F = dft_spectrum(np.full(64, 3.25))
        assert F[0] == pytest.approx(3.25, abs=1e-12)
        assert np.abs(F[1:]).max() < 1e-12

    def test_unit_impulse_flat(self):
        x = np.zeros(8)
        x[0] = 1.0
        np.testing.assert_allclose(dft_spectrum(x), np.full(8, 1.0 / 8),
                                   atol=1e-15)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(1024)
        naive = np.array([(x * np.exp(-2j * np.pi * np.arange(1024) * u
                                      / 1024)).sum() for u in range(1024)]
                         ) / 1024
        fast = dft_spectrum(x)
        rel = np.abs(fast - naive).max() / np.abs(naive).max()
        assert rel <= 1e-9

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            dft_spectrum([1.0])

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_linearity(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(128)
        y = rng.standard_normal(128)
        a, b = rng.standard_normal(2)
        lhs = dft_spectrum(a * x + b * y)
        rhs = a * dft_spectrum(x) + b * dft_spectrum(y)
        scale = max(np.abs(rhs).max(), 1e-30)
        assert np.abs(lhs - rhs).max() / scale <= 1e-9

    @pytest.mark.parametrize("m", [64, 1024])
    def test_energy_identity(self, m):
        rng = np.random.default_rng(m)
        x = rng.standard_normal(m)
        F = dft_spectrum(x)
        lhs = (np.abs(F) ** 2).sum()
        rhs = (x ** 2).sum() / m
        assert abs(lhs - rhs) / rhs <= 1e-6


class TestPowerSpectrum:
    def test_on_grid_sine(self):
        # unit-amplitude sine exactly on a transform frequency: |F| = 1/2 at
        # the matching row and its mirror
        m, rate, f = 256, 8000.0, 8000.0 * 10 / 256
        t = np.arange(m) / rate
        x = np.sin(2 * np.pi * f * t)
        W = power_spectrum([x], rate)
        col = W.values[:, 0]
        k = round(f * m / rate)  # = 10
        # DC row dropped: row index k-1 corresponds to frequency index k
        assert col[k - 1] == pytest.approx(0.5, abs=1e-9)
        assert col[m - k - 1] == pytest.approx(0.5, abs=1e-9)
        others = np.delete(col, [k - 1, m - k - 1])
        assert others.max() < 1e-9

    def test_zero_signal(self):
        W = power_spectrum([np.zeros(64), np.ones(64)], 8000.0)
        assert np.all(W.values[:, 0] == 0.0)
        assert W.values.shape == (63, 2)

    def test_dc_excluded(self):
        W = power_spectrum([np.full(64, 5.0)], 8000.0)
        assert np.abs(W.values).max() < 1e-12  # DC row carried it all

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            power_spectrum([np.zeros(64), np.zeros(65)], 8000.0)

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            power_spectrum([], 8000.0)


class TestBinAverage:
    def _wrap(self, rows):
        from gastkit.spectral import PowerSpectrumMatrix
        return PowerSpectrumMatrix(np.asarray(rows, dtype=float), 8000.0)

    def test_all_ones(self):
        W = self._wrap(np.ones((63, 2)))
        out = bin_average(W, 4, half_spectrum=False)
        np.testing.assert_allclose(out, np.ones((4, 2)), atol=1e-15)

    def test_arithmetic_example(self):
        W = self._wrap(np.arange(1, 9, dtype=float)[:, None])
        out = bin_average(W, 4, half_spectrum=False)
        np.testing.assert_allclose(out[:, 0], [1.5, 3.5, 5.5, 7.5])

    def test_remainder_folded_into_last_bin(self):
        rows = np.arange(1, 11, dtype=float)[:, None]  # 10 rows, 4 bins, b=2
        out = bin_average(self._wrap(rows), 4, half_spectrum=False)
        np.testing.assert_allclose(out[:, 0], [1.5, 3.5, 5.5, 8.5])

    def test_paper_bin_width(self):
        assert bin_width_hz(44100.0, 1024) == pytest.approx(21.5, abs=0.05)

    def test_mass_preservation_when_divisible(self):
        rng = np.random.default_rng(1)
        rows = np.abs(rng.standard_normal((1024, 3)))
        out = bin_average(self._wrap(rows), 8, half_spectrum=False)
        b = 1024 // 8
        np.testing.assert_allclose((out * b).sum(axis=0), rows.sum(axis=0),
                                   rtol=1e-9)

    def test_too_few_rows(self):
        with pytest.raises(TooFewRowsError):
            bin_average(self._wrap(np.ones((7, 1))), 8, half_spectrum=False)

    def test_half_spectrum_uses_nyquist_only(self):
        # content above Nyquist must not leak into bins
        rows = np.zeros((127, 1))  # M = 128
        rows[100, 0] = 50.0  # mirrored half only
        out = bin_average(self._wrap(rows), 4, half_spectrum=True)
        assert np.abs(out).max() == 0.0


class TestLogTransform:
    def test_zero_floor(self):
        spec = log_transform(np.zeros((4, 2)), 1e-12, sample_rate=8000.0)
        np.testing.assert_allclose(spec.values, np.log(1e-12))
        assert spec.values[0, 0] == pytest.approx(-27.631, abs=1e-3)

    def test_value_e_minus_eps(self):
        eps = 1e-12
        spec = log_transform(np.full((1, 1), np.e - eps), eps,
                             sample_rate=8000.0)
        assert spec.values[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_monotone(self):
        vals = np.array([[0.1, 0.2], [0.3, 0.4]])
        spec = log_transform(vals, 1e-12, sample_rate=8000.0)
        assert np.all(np.diff(spec.values.ravel()) > 0)

    def test_eps_positive_required(self):
        with pytest.raises(ValueError):
            log_transform(np.ones((1, 1)), 0.0, sample_rate=8000.0)


class TestPersistence:
    def test_binary_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        spec = BinnedSpectrogram(rng.standard_normal((16, 5)), 16, 21.5)
        path = tmp_path / "w.bin"
        write_binned(path, spec)
        back = read_binned(path)
        np.testing.assert_array_equal(back.values, spec.values)
        assert back.bin_width_hz == spec.bin_width_hz

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ValueError):
            read_binned(path)

    def test_csv_export(self, tmp_path):
        spec = BinnedSpectrogram(np.arange(6, dtype=float).reshape(3, 2),
                                 3, 21.5)
        path = tmp_path / "w.csv"
        export_binned_csv(path, spec)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "bin,r0,r1"
        assert len(lines) == 4
