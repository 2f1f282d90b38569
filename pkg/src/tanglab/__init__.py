"""Numerical laboratory for boundary limits of harmonic functions of subordinate Brownian motion."""

__version__ = "0.1.0"
