"""Numerical laboratory for the mean-field laser master equation."""

__version__ = "0.1.0"
