"""This file handles the error types for the diffcore part of the project."""


class ShapeError(ValueError):
    """Raised when an operation receives operands it cannot combine."""


class NumericError(ArithmeticError):
    """Raised when an operation produces NaN or Inf from its inputs."""

    def __init__(self, kind: str, detail: str = "") -> None:
        self.kind = kind
        message = f"operation '{kind}' produced non-finite values"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class ContractError(RuntimeError):
    """Raised when a tape, tensor or optimizer is used out of contract."""
