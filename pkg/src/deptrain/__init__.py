"""Quantile-constrained planning and simulation for distributed training."""

__version__ = "0.1.0"
