"""Solvers for discrete-time, finite-state mean field games."""

__version__ = "0.1.0"
