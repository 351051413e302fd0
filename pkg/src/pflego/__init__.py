"""Personalized federated learning with exact SGD steps over a shared backbone and per-client heads."""

__version__ = "0.1.0"
