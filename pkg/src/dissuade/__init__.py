"""Influence-diagram and equilibrium analysis of counter-hybrid-threat measures."""

__version__ = "0.1.0"
