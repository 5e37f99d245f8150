"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or inconsistent input (dimensions, parameters, config)."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DivergenceError(NumericError):
    """An iterative solve failed to reach its tolerance within the cap."""


class InsufficientDataError(ValueError):
    """A trace is too short for the requested verification."""
