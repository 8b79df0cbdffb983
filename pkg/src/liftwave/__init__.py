"""Helmholtz transmission across a quasiperiodic interface via 3D lifting."""

__version__ = "0.1.0"
