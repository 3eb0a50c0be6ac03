"""Quadratic convex optimal power flow for distribution feeders."""

__version__ = "0.1.0"
