"""Desk-scale simulation laboratory for disorder-free localization in Z2 lattice gauge theories."""

__version__ = "0.1.0"
