"""Boundary-control wave model for matrix Schrodinger operators on the half-line."""
__version__ = "0.1.0"
