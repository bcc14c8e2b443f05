"""This file handles the error types for the models part of the project."""


class ModelError(ValueError):
    """Raised for invalid model construction or inputs."""


class CheckpointError(ModelError):
    """Raised when a checkpoint file is malformed or incompatible."""
