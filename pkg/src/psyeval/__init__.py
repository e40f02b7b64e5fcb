"""Scoring of hierarchical personality scales and fidelity metrics for simulated samples."""

__version__ = "0.1.0"
