"""Noise-adaptive label correction for point-cloud segmentation, at desk scale."""

__version__ = "0.1.0"
