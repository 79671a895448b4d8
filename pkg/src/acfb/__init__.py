"""Finite-difference minimizers and free-boundary diagnostics for vector Allen-Cahn energies
with potentials that vanish like |u - a_i|^alpha at the wells."""

__version__ = "0.1.0"
