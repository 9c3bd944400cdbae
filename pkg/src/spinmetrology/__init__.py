"""Metrology numerics for N two-mode bosons treated as a spin-N/2 particle."""

__version__ = "0.1.0"
