"""Numerical laboratory for unitary Brownian motion and its eigenvalue dynamics."""

__version__ = "0.1.0"
