"""Numerical laboratory for weighted resolvent estimates and local energy decay."""
__version__ = "0.1.0"
