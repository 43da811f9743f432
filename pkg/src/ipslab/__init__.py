"""Simulation and verification lab for three-state contact processes, their edge
regeneration structure and oriented site percolation."""

__version__ = "0.1.0"
