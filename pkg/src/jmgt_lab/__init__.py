"""Spectral-Galerkin laboratory for the JMGT equation and its Westervelt limit."""

__version__ = "0.1.0"
