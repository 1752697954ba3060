"""Kinetic Monte Carlo simulation of growing online social networks."""

__version__ = "0.1.0"
