"""Wavelet renormalization group for free lattice scalar fields."""

__version__ = "0.1.0"
