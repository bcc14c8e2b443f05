"""This file handles the error types for the bench part of the project."""


class BenchmarkError(ValueError):
    """Raised for invalid benchmark specs, sweeps and metric inputs."""
