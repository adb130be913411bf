"""Discrete Gaussian sampling over shifted lattices and an exact CVP solver."""

__version__ = "0.1.0"
