"""This file handles the error types for the augment part of the project."""


class AugmentError(ValueError):
    """Raised for invalid transformation settings."""
