"""Reconstruct research development chains from clusters of related papers."""

__version__ = "0.1.0"
