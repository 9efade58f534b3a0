"""Discrete conformal maps: construction, spectral analysis, reconstruction and dressing."""
__version__ = "0.1.0"
