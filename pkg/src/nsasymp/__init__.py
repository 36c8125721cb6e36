"""Numerical laboratory for large-time asymptotics of 2D Navier-Stokes."""

__version__ = "0.1.0"
