"""Deterministic headless 3D simulator and reward engine for semantic inspection planning."""

__version__ = "0.1.0"
