"""Sampling-based approximate optimal feedback planning."""

__version__ = "0.1.0"
