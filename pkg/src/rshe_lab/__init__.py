"""Numerical laboratory for the rearranged stochastic heat equation on the circle."""

__version__ = "0.1.0"
