"""Pseudospectral laboratory for the renormalized dynamic Phi^4_2 model."""

__version__ = "0.1.0"
