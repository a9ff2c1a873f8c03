"""Spatial-semantic environment memory, retrieval and multi-goal route planning."""

__version__ = "0.1.0"
