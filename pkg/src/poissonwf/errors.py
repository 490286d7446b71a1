"""Exception types raised by poissonwf."""


class PoissonWFError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(PoissonWFError, ValueError):
    pass


class ShapeError(PoissonWFError, ValueError):
    pass


class DegenerateEnsembleError(PoissonWFError, ArithmeticError):
    """A measurement ensemble or intensity vector cannot be calibrated."""


class SingularEvaluationError(PoissonWFError, ArithmeticError):
    """The Poisson log-likelihood has a nonpositive log argument."""

    def __init__(self, index: int, value: float):
        self.index = index
        self.value = value
        super().__init__(
            f"log argument |a_j* z|^2 + b_j = {value!r} is not positive at index {index}"
        )


class OutOfTheoryRangeError(InvalidParameterError):
    """A parameter lies outside the range where the convergence constants are defined."""


class ExcludedDirectionError(InvalidParameterError):
    pass
