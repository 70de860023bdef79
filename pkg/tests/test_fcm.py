"""Frequency-correlation-matrix tests: PCA fitting and denoising, Pearson
correlation, the per-day pipeline, resizing, and exports."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gastkit.fcm import (
    FCM, DegenerateInputError, FcmPipelineConfig, InsufficientRecordingsError,
    correlation_matrix, export_fcm_csv, export_fcm_image, fcm_for_day,
    pca_denoise, pca_fit, pearson, read_fcm, resize_fcm, write_fcm,
)
from gastkit.soundscape import TimeCode
from gastkit.spectral import BinnedSpectrogram


class TestPcaFit:
    def test_rank1_line(self):
        t = np.linspace(-1, 1, 50)
        data = np.stack([t, 2 * t], axis=1)
        model = pca_fit(data)
        direction = np.array([1.0, 2.0]) / np.sqrt(5.0)
        assert np.abs(model.components[0]) == pytest.approx(np.abs(direction),
                                                            abs=1e-9)
        assert model.eigenvalues[1] == pytest.approx(0.0, abs=1e-12)
        assert model.retained_count == 1

    def test_isotropic_cloud(self):
        rng = np.random.default_rng(0)
        data = rng.standard_normal((10_000, 2))
        model = pca_fit(data)
        lo, hi = sorted(model.eigenvalues)
        assert (hi - lo) / hi < 0.15

    def test_identical_rows_degenerate(self):
        with pytest.raises(DegenerateInputError):
            pca_fit(np.ones((5, 3)))

    def test_components_orthonormal_eigs_descending(self):
        rng = np.random.default_rng(3)
        model = pca_fit(rng.standard_normal((40, 6)))
        gram = model.components @ model.components.T
        np.testing.assert_allclose(gram, np.eye(6), atol=1e-8)
        assert np.all(np.diff(model.eigenvalues) <= 1e-12)
        assert np.all(model.eigenvalues >= 0)

    def test_full_reconstruction(self):
        rng = np.random.default_rng(4)
        data = rng.standard_normal((30, 5))
        model = pca_fit(data)
        proj = (data - model.mean) @ model.components.T
        recon = proj @ model.components + model.mean
        assert np.abs(recon - data).max() <= 1e-9

    @pytest.mark.parametrize("seed", range(10))
    def test_retained_minimal_k_oracle(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(3, 10))
        data = rng.standard_normal((50, d)) * rng.uniform(0.1, 5.0, size=d)
        model = pca_fit(data, 0.95)
        ratios = model.eigenvalues / model.eigenvalues.sum()
        # brute-force oracle: smallest k whose cumulative sum reaches 0.95
        k = next(i + 1 for i in range(d)
                 if ratios[: i + 1].sum() >= 0.95 - 1e-12)
        assert model.retained_count == k


class TestPcaDenoise:
    def _spec(self, values):
        return BinnedSpectrogram(values, values.shape[0], 21.5)

    def test_threshold_one_is_identity(self):
        rng = np.random.default_rng(0)
        values = rng.standard_normal((16, 10))
        out = pca_denoise(self._spec(values), 1.0)
        assert np.abs(out.values - values).max() <= 1e-9

    def test_planted_rank1_denoising(self):
        rng = np.random.default_rng(1)
        bins, recs = 32, 40
        pattern = rng.standard_normal(bins)
        amps = rng.uniform(0.5, 2.0, recs)
        clean = np.outer(pattern, amps)
        noisy = clean + 0.05 * rng.standard_normal((bins, recs))
        out = pca_denoise(self._spec(noisy), 0.95)

        def corr(a, b):
            return np.corrcoef(a.ravel(), b.ravel())[0, 1]

        assert corr(out.values, clean) > corr(noisy, clean)

    def test_needs_two_recordings(self):
        with pytest.raises(InsufficientRecordingsError):
            pca_denoise(self._spec(np.ones((4, 1))))


class TestPearson:
    def test_identical(self):
        assert pearson([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)

    def test_reversed(self):
        assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_closed_form(self):
        assert pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)

    def test_zero_variance_sentinel(self):
        assert np.isnan(pearson([1, 1, 1], [1, 2, 3]))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            pearson([1, 2], [1, 2, 3])

    @given(st.integers(0, 2 ** 31), st.floats(0.1, 10.0),
           st.floats(-5.0, 5.0))
    @settings(max_examples=30, deadline=None)
    def test_affine_invariance(self, seed, a, b):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(20)
        y = rng.standard_normal(20)
        r = pearson(x, y)
        assert pearson(a * x + b, y) == pytest.approx(r, abs=1e-9)
        assert pearson(x, -a * y + b) == pytest.approx(-r, abs=1e-9)

    @given(st.integers(0, 2 ** 31), st.floats(0.1, 4.0))
    @settings(max_examples=30, deadline=None)
    def test_perfect_correlation_with_scaled_self(self, seed, a):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(15)
        assert pearson(x, a * x + 1.0) == pytest.approx(1.0, abs=1e-9)
        assert pearson(x, -a * x + 1.0) == pytest.approx(-1.0, abs=1e-9)


class TestCorrelationMatrix:
    def test_matches_pairwise_pearson(self):
        rng = np.random.default_rng(2)
        rows = rng.standard_normal((6, 30))
        corr = correlation_matrix(rows)
        for i in range(6):
            for j in range(6):
                expected = 1.0 if i == j else pearson(rows[i], rows[j])
                assert corr[i, j] == pytest.approx(expected, abs=1e-12)

    def test_zero_variance_rows(self):
        rows = np.array([[1.0, 1.0, 1.0], [1.0, 2.0, 3.0]])
        corr = correlation_matrix(rows)
        assert corr[0, 0] == 1.0 and corr[1, 1] == 1.0
        assert corr[0, 1] == 0.0 and corr[1, 0] == 0.0


def _day_recordings(freq_pairs, n_recordings=20, n=1024, rate=8000.0, seed=0):
    """Tones at the given frequencies; each inner tuple co-varies."""
    rng = np.random.default_rng(seed)
    t = np.arange(n) / rate
    recs = []
    for _ in range(n_recordings):
        x = 0.02 * rng.standard_normal(n)
        for group in freq_pairs:
            level = rng.uniform(0.2, 1.0)
            for f in group:
                x += level * np.sin(2 * np.pi * f * t + rng.uniform(0, 7))
        recs.append(x)
    return recs


class TestFcmForDay:
    CFG = FcmPipelineConfig(n_bins=64, variance_threshold=1.0)

    def test_identical_recordings_all_ones(self):
        rng = np.random.default_rng(0)
        rec = rng.standard_normal(512)
        # identical recordings leave zero variance everywhere: diagonal 1,
        # undefined off-diagonals mapped to 0
        F = fcm_for_day([rec, rec, rec], 8000.0,
                        FcmPipelineConfig(n_bins=64, variance_threshold=1.0))
        np.testing.assert_allclose(np.diag(F.values), 1.0)
        # off-diagonals are either the zero sentinel or rounding dust that
        # is itself perfectly correlated; all defined entries equal 1
        off = np.abs(F.values - np.diag(np.diag(F.values)))
        assert np.all((off == 0.0) | (off == 1.0))

    def _bin_of(self, freq, rate=8000.0, n=1024, n_bins=64):
        # DC-less half spectrum has n//2 rows; b rows per output bin
        row = round(freq * n / rate) - 1
        return row // ((n // 2) // n_bins)

    def test_covarying_pair_and_independent_tone(self):
        f1, f2, f3 = 500.0, 1500.0, 3000.0
        recs = _day_recordings([(f1, f2), (f3,)], seed=2)
        F = fcm_for_day(recs, 8000.0, self.CFG)
        p, q, r = (self._bin_of(f) for f in (f1, f2, f3))
        assert F.r_squared().values[p, q] > 0.9
        assert abs(F.values[p, r]) < 0.3
        assert abs(F.values[q, r]) < 0.3
        assert F.values[p, p] == 1.0

    def test_validity_invariants(self):
        recs = _day_recordings([(700.0,), (2100.0,)], seed=5)
        F = fcm_for_day(recs, 8000.0, self.CFG, device_id="dev00",
                        date=TimeCode(2019, 5, 6, 10, 20))
        assert np.abs(F.values - F.values.T).max() <= 1e-9
        assert F.values.min() >= -1.0 and F.values.max() <= 1.0
        assert F.date == TimeCode(2019, 5, 6)  # truncated to the date
        assert F.device_id == "dev00"

    def test_insufficient_recordings(self):
        with pytest.raises(InsufficientRecordingsError):
            fcm_for_day([np.zeros(256)], 8000.0, self.CFG)

    def test_squared_and_resize_flags(self):
        recs = _day_recordings([(700.0, 900.0)], seed=6)
        cfg = FcmPipelineConfig(n_bins=64, variance_threshold=1.0,
                                squared=True, resize_target=32)
        F = fcm_for_day(recs, 8000.0, cfg)
        assert F.squared
        assert F.n_bins == 32
        assert F.values.min() >= 0.0


class TestResize:
    def test_identity(self):
        F = FCM(np.eye(8))
        out = resize_fcm(F, 8)
        np.testing.assert_array_equal(out.values, F.values)

    def test_all_ones_mean_pool(self):
        out = resize_fcm(FCM(np.ones((4, 4))), 2)
        np.testing.assert_allclose(out.values, np.ones((2, 2)))

    def test_symmetry_preserved(self):
        rng = np.random.default_rng(7)
        a = rng.uniform(-1, 1, (8, 8))
        sym = np.clip((a + a.T) / 2, -1, 1)
        np.fill_diagonal(sym, 1.0)
        out = resize_fcm(FCM(sym), 4)
        np.testing.assert_allclose(out.values, out.values.T, atol=1e-12)

    def test_divisibility_error(self):
        with pytest.raises(ValueError):
            resize_fcm(FCM(np.eye(8)), 3)


class TestExports:
    def test_pgm_identity_fcm(self, tmp_path):
        F = FCM(np.eye(4))
        path = tmp_path / "f.pgm"
        export_fcm_image(F, path)
        blob = path.read_bytes()
        assert blob.startswith(b"P5\n4 4\n255\n")
        pix = np.frombuffer(blob[len(b"P5\n4 4\n255\n"):], dtype=np.uint8)
        np.testing.assert_array_equal(pix.reshape(4, 4),
                                      np.eye(4, dtype=np.uint8) * 255)

    def test_pixel_quantization_exact(self, tmp_path):
        vals = np.full((2, 2), 0.5)
        np.fill_diagonal(vals, 1.0)
        F = FCM(vals, squared=True)
        path = tmp_path / "f.pgm"
        export_fcm_image(F, path)
        pix = np.frombuffer(path.read_bytes().split(b"255\n", 1)[1],
                            dtype=np.uint8)
        assert sorted(set(pix.tolist())) == [round(255 * 0.5), 255]

    def test_png_export_decodes(self, tmp_path):
        import struct
        import zlib
        F = FCM(np.eye(3))
        path = tmp_path / "f.png"
        export_fcm_image(F, path)
        blob = path.read_bytes()
        assert blob.startswith(b"\x89PNG\r\n\x1a\n")
        # pull the IDAT payload back out and reverse the null filter
        idx = blob.index(b"IDAT")
        (length,) = struct.unpack(">I", blob[idx - 4:idx])
        raw = zlib.decompress(blob[idx + 4:idx + 4 + length])
        rows = [raw[i * 4 + 1:i * 4 + 4] for i in range(3)]
        pix = np.frombuffer(b"".join(rows), dtype=np.uint8).reshape(3, 3)
        np.testing.assert_array_equal(pix, np.eye(3, dtype=np.uint8) * 255)

    def test_binary_round_trip(self, tmp_path):
        rng = np.random.default_rng(8)
        a = rng.uniform(-1, 1, (6, 6))
        vals = np.clip((a + a.T) / 2, -1, 1)
        np.fill_diagonal(vals, 1.0)
        F = FCM(vals, "dev03", TimeCode(2019, 5, 6), squared=False)
        path = tmp_path / "f.fcm"
        write_fcm(path, F)
        back = read_fcm(path)
        np.testing.assert_array_equal(back.values, F.values)
        assert back.device_id == "dev03"
        assert back.date == TimeCode(2019, 5, 6)
        assert back.squared is False

    def test_csv_export(self, tmp_path):
        F = FCM(np.eye(3))
        path = tmp_path / "f.csv"
        export_fcm_csv(path, F)
        rows = path.read_text().strip().splitlines()
        assert len(rows) == 3
        assert [float(v) for v in rows[0].split(",")] == [1.0, 0.0, 0.0]


class TestFcmInvariants:
    def test_constructor_rejects_asymmetric(self):
        bad = np.eye(3)
        bad[0, 1] = 0.5
        with pytest.raises(ValueError):
            FCM(bad)

    def test_constructor_rejects_out_of_range(self):
        bad = np.eye(3) * 2.0
        with pytest.raises(ValueError):
            FCM(bad)

    def test_r_squared(self):
        vals = np.array([[1.0, -0.5], [-0.5, 1.0]])
        F = FCM(vals)
        sq = F.r_squared()
        assert sq.squared
        np.testing.assert_allclose(sq.values,
                                   np.array([[1.0, 0.25], [0.25, 1.0]]))
