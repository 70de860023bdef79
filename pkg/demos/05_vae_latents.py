"""Variational autoencoder on FCM images: KL-weight annealing, pyramid
reconstruction loss, and deterministic latent encoding.

Run:  python3 demos/05_vae_latents.py   (about half a minute)
"""

import numpy as np

from gastkit.vae import VaeConfig, beta_schedule, build_vae, encode, train_vae

# The KL weight ramps linearly from 0 to its cap s over e_max epochs.
for e in (0, 350, 700, 1400):
    print(f"beta({e:4d}) = {beta_schedule(e, 700, 1e-4):.1e}")

# Synthetic 32x32 FCM-like images: squared correlation of low-rank series.
rng = np.random.default_rng(0)
images = []
for _ in range(24):
    factors = rng.standard_normal((32, 2))
    series = factors @ rng.standard_normal((2, 16))
    series += 0.3 * rng.standard_normal((32, 16))
    images.append(np.corrcoef(series) ** 2)

config = VaeConfig(input_side=32, feature_maps=(4, 6, 8), latent_dim=8,
                   fc_widths=(64, 32), epochs=30, lr=3e-4, e_max=20,
                   s=1e-4, pyramid_levels=3, batch_size=8, seed=0)
model, history = train_vae(images, config)
first, last = history[0], history[-1]
print(f"\nepoch  1: rec = {first[2]:.4f}  kl = {first[3]:.3f}")
print(f"epoch {last[0]}: rec = {last[2]:.4f}  kl = {last[3]:.3f}")

# Encoding is deterministic in inference mode; sigma is always positive.
emb = encode(model, images[0], device_id="dev00")
emb2 = encode(model, images[0], device_id="dev00")
assert np.array_equal(emb.mu, emb2.mu)
print("\nlatent mu:", np.round(emb.mu[:4], 3), "...")
print("latent sigma range:", round(float(emb.sigma.min()), 3), "-",
      round(float(emb.sigma.max()), 3))
