"""Fractional NLS toolkit: spectra, small-divisor scans, Galerkin dynamics and Birkhoff normal forms."""

__version__ = "0.1.0"
