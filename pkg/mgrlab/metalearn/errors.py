"""This file handles the error types for the metalearn part of the project."""


class MetaConfigError(ValueError):
    """Raised when a training configuration fails validation."""


class DegenerateEpsilonError(ArithmeticError):
    """Raised when the validation gradient is too small to scale epsilon."""

    def __init__(self, norm: float) -> None:
        self.norm = norm
        super().__init__(
            f"validation gradient norm {norm:.3e} is below 1e-12; the "
            f"finite-difference radius is undefined"
        )
