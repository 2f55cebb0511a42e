"""Directional relation discovery with minimum predictive information."""
__version__ = "0.1.0"
