"""Entanglement certification for networks of shared bipartite states."""

__version__ = "0.1.0"
