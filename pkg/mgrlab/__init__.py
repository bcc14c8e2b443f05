"""Desk-scale laboratory for meta generative regularization."""

__version__ = "0.1.0"
