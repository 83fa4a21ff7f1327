"""Induced-map laboratory for polynomially mixing hyperbolic systems."""

__version__ = "0.1.0"
