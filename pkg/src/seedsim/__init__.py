"""Deterministic simulation of a two-probe sounding-rocket avionics stack."""

__version__ = "0.1.0"
