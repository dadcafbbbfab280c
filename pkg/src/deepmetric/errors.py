"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible or invalid shapes."""


class ConfigError(ValueError):
    """A configuration value is missing, malformed, or inconsistent."""


class DataFormatError(ValueError):
    """A data file does not conform to the documented format."""


class UnusableAnchorError(ValueError):
    """The anchor has no opposite-view positive sample to pair with."""


class DegenerateEmbeddingError(ArithmeticError):
    """The pre-normalization embedding is the zero vector."""


class ZeroDistanceError(ArithmeticError):
    """Distance gradients requested at zero distance, where they are undefined."""


class ConvergenceError(ArithmeticError):
    """An iterative solver failed to converge within its iteration cap."""


class DivergenceError(ArithmeticError):
    """Training produced a non-finite parameter value."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite parameter detected at step {step}")
