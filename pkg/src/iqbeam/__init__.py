"""Least-squares channel estimation and energy beamforming over IQ-imbalanced MISO links."""

__version__ = "0.1.0"
