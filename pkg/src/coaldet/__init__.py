"""Coalescence determinants for coalescing skip-free particle systems."""

__version__ = "0.1.0"
