"""Maximally dissipative extensions of the interval Laplacian with a complex potential."""

__version__ = "0.1.0"
