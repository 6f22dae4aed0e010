"""Numerical engine for capital transmission with differential fertility."""

__version__ = "0.1.0"
