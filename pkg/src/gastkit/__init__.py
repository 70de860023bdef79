"""Soundscape analysis toolkit.

A numpy library covering the full chain from a formal soundscape data
model, through synthetic corpus generation and frequency correlation
matrices, to latent-space clustering with a convolutional VAE and
seven-day-sequence land-use classification with a 3-D convolutional
network, all on a small reverse-mode autodiff core.
"""

from . import (classifier, cluster, fcm, nn, pipeline, soundscape, spectral,
               synthesis, tensor, vae)

__version__ = "0.1.0"

__all__ = ["classifier", "cluster", "fcm", "nn", "pipeline", "soundscape",
           "spectral", "synthesis", "tensor", "vae", "__version__"]
