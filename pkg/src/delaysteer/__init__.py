"""Spectral analysis and null-controllability synthesis for linear delay systems."""

__version__ = "0.1.0"
