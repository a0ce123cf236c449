"""Hybrid quantum-classical dynamics in operator form."""

__version__ = "0.1.0"
