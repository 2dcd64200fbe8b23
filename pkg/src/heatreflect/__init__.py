"""Reflection principle for null-controllability of heat-type equations."""

__version__ = "0.1.0"
