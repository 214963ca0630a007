"""Deterministic multichannel active noise control simulation."""

__version__ = "0.1.0"
