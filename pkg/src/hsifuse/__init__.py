"""Blind hyperspectral/multispectral image fusion with joint PSF and SRF estimation."""

__version__ = "0.1.0"
