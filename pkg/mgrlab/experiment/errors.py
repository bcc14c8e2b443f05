"""This file handles the error types for the experiment part of the project."""


class ConfigError(ValueError):
    """Raised when an experiment file fails to parse or validate."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RunError(RuntimeError):
    """Raised when one or more experiment cells failed."""


class CheckError(RuntimeError):
    """Raised when an invariant check cannot build a valid instance."""
