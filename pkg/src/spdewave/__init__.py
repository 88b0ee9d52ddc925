"""Wavelet tools for measuring the spatial regularity of SPDE solutions on polygons."""

__version__ = "0.1.0"
