"""Numerical lab for entropy of measures on energy surfaces of the periodic flow."""

__version__ = "0.1.0"
