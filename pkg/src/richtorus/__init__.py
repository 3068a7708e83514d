"""Quasi-linear systems from polynomial integrals of geodesic flows on the 2-torus."""

__version__ = "0.1.0"
