"""Redfield, RWA, pseudo-Lindblad and truncated Lindblad master equations
for small exactly diagonalizable systems."""

__version__ = "0.1.0"
