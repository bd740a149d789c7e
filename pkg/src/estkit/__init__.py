"""Structured estimation from few random observations."""

__version__ = "0.1.0"
