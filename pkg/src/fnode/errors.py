"""Exception hierarchy shared across the package."""


class FnodeError(Exception):
    """Base class for all package errors."""


class InvalidInputError(FnodeError, ValueError):
    pass


class ShapeError(FnodeError, ValueError):
    pass


class UnsupportedOrderError(FnodeError, ValueError):
    pass


class UnsupportedSamplingError(FnodeError, ValueError):
    """Raised for non-uniform time grids (only uniform sampling is handled)."""


class NyquistError(FnodeError, ValueError):
    """Cutoff frequency exceeds what the sampling rate can resolve."""


class ConfigError(FnodeError, ValueError):
    pass


class NumericalError(FnodeError, ArithmeticError):
    pass


class DivergenceError(NumericalError):
    """A trajectory produced non-finite values.

    ``sample`` is the offending sample index when known; ``time`` is the last
    time at which the state was still finite.
    """

    def __init__(self, message, sample=None, time=None):
        super().__init__(message)
        self.sample = sample
        self.time = time


class BudgetError(NumericalError):
    pass
