"""Attention + light-graph memory network for medication recommendation."""

__version__ = "0.1.0"
