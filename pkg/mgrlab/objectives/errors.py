"""This file handles the error types for the objectives part of the project."""


class LossError(ValueError):
    """Raised when a loss receives labels, batches or weights it rejects."""
