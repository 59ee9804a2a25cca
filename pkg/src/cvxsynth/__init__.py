"""Synthetic tabular data by learned convex combinations inside data neighborhoods."""

__version__ = "0.1.0"
