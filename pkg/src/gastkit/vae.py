"""Convolutional variational autoencoder over FCM images with a linearly
annealed KL weight, plus the training loop and latent-space encoding used
by the clustering stage.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import nn
from .nn import (Adam, BatchNorm, Conv2d, ConvTranspose2d, Dense, Module,
                 PReLU, kl_standard_normal, laplacian_pyramid_loss)
from .tensor import Tensor

__all__ = ["VaeConfig", "LatentEmbedding", "Vae", "build_vae",
           "beta_schedule", "vae_loss", "train_vae", "encode",
           "write_loss_history", "write_embeddings_csv",
           "export_embedding_scatter_svg"]


@dataclass
class VaeConfig:
    input_side: int = 64            # paper-scale runs use 128
    feature_maps: Tuple[int, int, int] = (8, 16, 32)
    latent_dim: int = 16
    fc_widths: Tuple[int, int] = (256, 128)
    epochs: int = 2000
    lr: float = 1e-5
    e_max: int = 700
    s: float = 1e-4
    pyramid_levels: int = 4
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.input_side % 8 != 0:
            raise ValueError("input_side must be divisible by 8 "
                             "(three pooling halvings)")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.fc_widths[1] * 2 != self.fc_widths[0]:
            raise ValueError("second fc width must be half the first")


@dataclass
class LatentEmbedding:
    mu: np.ndarray
    sigma: np.ndarray
    device_id: str = ""
    date: Optional[object] = None

    def __post_init__(self):
        if np.any(self.sigma <= 0):
            raise ValueError("sigma entries must be positive")


def beta_schedule(epoch: int, e_max: int, s: float) -> float:
    """Linear KL-weight ramp: min(epoch / e_max, 1) * s."""
    if epoch < 0 or e_max <= 0 or s < 0:
        raise ValueError("epoch >= 0, e_max > 0, s >= 0 required")
    return min(epoch / e_max, 1.0) * s


class Vae(Module):
    """Three-section conv encoder/decoder with an FC trunk and mu/logvar heads."""

    def __init__(self, config: VaeConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        f1, f2, f3 = config.feature_maps
        side = config.input_side // 8
        self.bottleneck = (f3, side, side)
        flat = f3 * side * side
        w1, w2 = config.fc_widths

        def conv_block(cin, cout, name):
            return (Conv2d(cin, cout, 3, rng, padding="same", name=name),
                    BatchNorm(cout, name=f"{name}.bn"))

        self.enc_blocks = []
        chans = [1, f1, f1, f2, f2, f3, f3]
        for i in range(6):
            self.enc_blocks.append(conv_block(chans[i], chans[i + 1],
                                              f"enc{i}"))
        self.enc_fc1 = Dense(flat, w1, rng, "enc_fc1")
        self.enc_act1 = PReLU("enc_fc1.prelu")
        self.enc_fc2 = Dense(w1, w2, rng, "enc_fc2")
        self.enc_act2 = PReLU("enc_fc2.prelu")
        self.mu_head = Dense(w2, config.latent_dim, rng, "mu_head")
        self.logvar_head = Dense(w2, config.latent_dim, rng, "logvar_head")

        self.dec_fc1 = Dense(config.latent_dim, w2, rng, "dec_fc1")
        self.dec_act1 = PReLU("dec_fc1.prelu")
        self.dec_fc2 = Dense(w2, w1, rng, "dec_fc2")
        self.dec_act2 = PReLU("dec_fc2.prelu")
        self.dec_fc3 = Dense(w1, flat, rng, "dec_fc3")
        self.dec_act3 = PReLU("dec_fc3.prelu")
        self.dec_sections = []
        dchans = [f3, f2, f1]
        for i, (cin, cout) in enumerate(zip(dchans, dchans[1:] + [f1])):
            self.dec_sections.append((
                ConvTranspose2d(cin, cout, 2, rng, stride=2, name=f"dect{i}"),
                BatchNorm(cout, name=f"dect{i}.bn"),
                Conv2d(cout, cout, 3, rng, padding="same", name=f"dec{i}"),
                BatchNorm(cout, name=f"dec{i}.bn"),
            ))
        self.out_conv = Conv2d(f1, 1, 1, rng, name="out_conv")
        self._buffers = {}
        for layer in self._bn_layers():
            self._buffers.update(layer._buffers)

    def _bn_layers(self):
        for _, bn in self.enc_blocks:
            yield bn
        for _, bn1, _, bn2 in self.dec_sections:
            yield bn1
            yield bn2

    # ------------------------------------------------------------------
    def encode_tensors(self, x: Tensor, train: bool) -> Tuple[Tensor, Tensor]:
        h = x
        for i, (conv, bn) in enumerate(self.enc_blocks):
            h = bn(conv(h), train=train).relu()
            if i % 2 == 1:  # second block of each section pools
                h = nn.maxpool2d(h, 2, 2)
        h = h.reshape(h.shape[0], -1)
        h = self.enc_act1(self.enc_fc1(h))
        h = self.enc_act2(self.enc_fc2(h))
        return self.mu_head(h), self.logvar_head(h)

    def decode_tensors(self, z: Tensor, train: bool) -> Tensor:
        h = self.dec_act1(self.dec_fc1(z))
        h = self.dec_act2(self.dec_fc2(h))
        h = self.dec_act3(self.dec_fc3(h))
        h = h.reshape((z.shape[0],) + self.bottleneck)
        for convt, bn1, conv, bn2 in self.dec_sections:
            h = bn1(convt(h), train=train).relu()
            h = bn2(conv(h), train=train).relu()
        return self.out_conv(h)

    def forward(self, x: Tensor, train: bool = True,
                rng: Optional[np.random.Generator] = None):
        mu, logvar = self.encode_tensors(x, train)
        if train and rng is not None:
            eps = rng.standard_normal(mu.shape)
            z = mu + (logvar * 0.5).exp() * Tensor(eps)
        else:
            z = mu
        recon = self.decode_tensors(z, train)
        return recon, mu, logvar


def build_vae(config: VaeConfig) -> Vae:
    return Vae(config)


def vae_loss(pred: Tensor, target: Tensor, mu: Tensor, logvar: Tensor,
             beta: float, pyramid_levels: int = 4):
    """Total = pyramid reconstruction + beta * KL; components reported too."""
    rec = laplacian_pyramid_loss(pred, target, levels=pyramid_levels)
    kl = kl_standard_normal(mu, logvar)
    total = rec + kl * beta
    return total, rec, kl


def train_vae(images: Sequence[np.ndarray], config: VaeConfig,
              model: Optional[Vae] = None,
              progress: Optional[callable] = None):
    """Train on FCM images (each input_side x input_side, values in [0, 1]).

    Returns (model, history); history rows are (epoch, beta, rec, kl, total),
    epoch-averaged. Deterministic under the config seed.
    """
    images = [np.asarray(im, dtype=np.float64) for im in images]
    if len(images) < 2:
        raise ValueError("need at least 2 training images")
    side = config.input_side
    for im in images:
        if im.shape != (side, side):
            raise ValueError(f"image shape {im.shape} != ({side}, {side})")
    data = np.stack(images)[:, None, :, :]
    model = model if model is not None else build_vae(config)
    opt = Adam(model.parameters(), lr=config.lr)
    rng = np.random.default_rng(config.seed + 1)
    history: List[tuple] = []
    n = data.shape[0]
    for epoch in range(1, config.epochs + 1):
        beta = beta_schedule(epoch, config.e_max, config.s)
        order = rng.permutation(n)
        sums = np.zeros(3)
        batches = 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            x = Tensor(data[idx])
            recon, mu, logvar = model.forward(x, train=True, rng=rng)
            total, rec, kl = vae_loss(recon, x, mu, logvar, beta,
                                      config.pyramid_levels)
            opt.zero_grad()
            total.backward()
            opt.step()
            sums += (float(rec.data), float(kl.data), float(total.data))
            batches += 1
        rec_m, kl_m, tot_m = sums / batches
        history.append((epoch, beta, rec_m, kl_m, tot_m))
        if progress is not None:
            progress(epoch, beta, rec_m, kl_m, tot_m)
    return model, history


def encode(model: Vae, image: np.ndarray, device_id: str = "",
           date=None) -> LatentEmbedding:
    """Inference-mode encoding: deterministic mu, positive sigma."""
    image = np.asarray(image, dtype=np.float64)
    side = model.config.input_side
    if image.shape != (side, side):
        raise ValueError(f"image shape {image.shape} != ({side}, {side})")
    x = Tensor(image[None, None, :, :])
    mu, logvar = model.encode_tensors(x, train=False)
    sigma = np.exp(0.5 * logvar.data[0])
    return LatentEmbedding(mu.data[0].copy(), sigma, device_id, date)


# ----------------------------------------------------------------------
# artifacts
# ----------------------------------------------------------------------

def write_loss_history(path, history: Sequence[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "beta", "rec", "kl", "total"])
        for epoch, beta, rec, kl, total in history:
            writer.writerow([epoch, repr(float(beta)), repr(float(rec)),
                             repr(float(kl)), repr(float(total))])


def write_embeddings_csv(path, embeddings: Sequence[LatentEmbedding]) -> None:
    if not embeddings:
        raise ValueError("no embeddings to write")
    d = embeddings[0].mu.size
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["device_id", "date"] + [f"mu_{i}" for i in range(d)])
        for emb in embeddings:
            date = ""
            if emb.date is not None:
                date = f"{emb.date.t1}-{emb.date.t2:02d}-{emb.date.t3:02d}"
            writer.writerow([emb.device_id, date]
                            + [repr(float(v)) for v in emb.mu])


def export_embedding_scatter_svg(path, embeddings: Sequence[LatentEmbedding],
                                 assignments: Optional[Sequence[int]] = None,
                                 size: int = 480) -> None:
    """Project mu vectors onto their first two principal axes and emit a
    simple SVG scatter, colored by cluster when assignments are given."""
    mus = np.stack([e.mu for e in embeddings])
    centered = mus - mus.mean(axis=0)
    if mus.shape[0] > 2:
        cov = centered.T @ centered / (mus.shape[0] - 1)
        vals, vecs = np.linalg.eigh(cov)
        proj = centered @ vecs[:, np.argsort(vals)[::-1][:2]]
    else:
        proj = centered[:, :2]
    span = max(np.abs(proj).max(), 1e-12)
    coords = (proj / span) * (size / 2 - 20) + size / 2
    palette = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
               "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22")
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
             f'height="{size}" viewBox="0 0 {size} {size}">']
    for i, (cx, cy) in enumerate(coords):
        color = (palette[assignments[i] % len(palette)]
                 if assignments is not None else "#1f77b4")
        parts.append(f'<circle cx="{cx:.2f}" cy="{size - cy:.2f}" r="4" '
                     f'fill="{color}"/>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
