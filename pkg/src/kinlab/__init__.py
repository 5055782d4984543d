"""Kinetic-entropy laboratory for 2x2 genuinely nonlinear systems."""

__version__ = "0.1.0"
