"""Simulation and verification tools for the l^p directed spanning forest."""

__version__ = "0.1.0"
