"""Latent-space super-resolution with region-wise noise addition, at desk scale."""

__version__ = "0.1.0"
