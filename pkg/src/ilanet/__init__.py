"""Infinite latent attribute models for binary networks, with IRM and LFRM baselines."""

__version__ = "0.1.0"
