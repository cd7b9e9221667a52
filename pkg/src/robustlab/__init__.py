"""Robust reinforcement learning under adjacent R-contamination uncertainty sets."""

__version__ = "0.1.0"
