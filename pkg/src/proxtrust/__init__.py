"""Proximity-based bi-directional trust over simulated mesh networks."""

__version__ = "0.1.0"
