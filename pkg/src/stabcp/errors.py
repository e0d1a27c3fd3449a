"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class DataError(ValueError):
    """A data file could not be parsed or fails validation."""


class NotFittedError(RuntimeError):
    """A model was used before `fit` was called."""


class NumericalError(ArithmeticError):
    """A numerical routine failed (singular system, no convergence)."""
