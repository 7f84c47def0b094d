"""Numerical core of fracbump."""

__version__ = "0.1.0"
