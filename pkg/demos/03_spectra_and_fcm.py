"""From a day of recordings to a frequency correlation matrix (FCM):
normalized DFT, binned magnitude spectra, log transform, PCA denoising,
and pairwise Pearson correlation between frequency bins.

Run:  python3 demos/03_spectra_and_fcm.py
"""

import tempfile
from pathlib import Path

import numpy as np

from gastkit import fcm as fcm_mod
from gastkit.soundscape import TimeCode
from gastkit.spectral import bin_average, dft_spectrum, log_transform, power_spectrum

rate = 8000.0
n = 2048
t = np.arange(n) / rate

# Twenty recordings of one day: tones at 500 and 1500 Hz co-vary (they share
# a per-recording level), the 3100 Hz tone moves independently.
rng = np.random.default_rng(0)
recordings = []
for _ in range(20):
    shared = rng.uniform(0.2, 1.0)
    solo = rng.uniform(0.2, 1.0)
    x = shared * (np.sin(2 * np.pi * 500 * t) + np.sin(2 * np.pi * 1500 * t))
    x += solo * np.sin(2 * np.pi * 3100 * t)
    x += 0.01 * rng.standard_normal(n)
    recordings.append(x)

# Normalized DFT: the 500 Hz line carries magnitude amp/2 at its bin.
F = dft_spectrum(recordings[0])
peak_bin = int(np.abs(F[1: n // 2]).argmax()) + 1
print("strongest line at", round(peak_bin * rate / n, 1), "Hz")

# Magnitude spectra -> uniform bins -> log scale.
W = power_spectrum(recordings, rate)
binned = bin_average(W, n_bins=64)
spec = log_transform(binned, 1e-12, sample_rate=rate)
print("binned spectrogram:", spec.values.shape, "bin width",
      round(spec.bin_width_hz, 1), "Hz")

# The full per-day pipeline with PCA denoising and correlation.
config = fcm_mod.FcmPipelineConfig(n_bins=64)
F = fcm_mod.fcm_for_day(recordings, rate, config, "dev00",
                        TimeCode(2019, 5, 6))

def bin_of(freq):
    return (round(freq * n / rate) - 1) // ((n // 2) // 64)

pair = F.values[bin_of(500), bin_of(1500)]
indep = F.values[bin_of(500), bin_of(3100)]
print(f"co-varying pair r = {pair:+.3f}  (R^2 = {pair**2:.3f})")
print(f"independent tones r = {indep:+.3f}")

# Export: lossless binary, CSV, and grayscale images of the R^2 matrix.
out = Path(tempfile.mkdtemp(prefix="fcm_demo_"))
fcm_mod.write_fcm(out / "day.fcm", F)
fcm_mod.export_fcm_csv(out / "day.csv", F)
fcm_mod.export_fcm_image(F.r_squared(), out / "day.pgm")
fcm_mod.export_fcm_image(F.r_squared(), out / "day.png")
back = fcm_mod.read_fcm(out / "day.fcm")
assert np.array_equal(back.values, F.values)
print("artifacts in", out)
