"""Transverse spectra, Riesz bases and energy decay for a dissipative two-component wave guide."""

__version__ = "0.1.0"
