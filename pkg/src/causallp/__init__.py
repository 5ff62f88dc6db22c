"""Causal link prediction over knowledge graphs with weighted causal links."""

__version__ = "0.1.0"
