"""Dilute nuclear-spin-bath noise simulation and time-frequency analysis."""

__version__ = "0.1.0"
