"""Numerical toolkit for multi-dimensional stability of relaxation shock profiles."""

__version__ = "0.1.0"
