"""Numerical construction and verification of a two-parameter family of
two-dimensional Einstein (alpha, beta)-metrics, built on exact jet arithmetic."""

__version__ = "0.1.0"
