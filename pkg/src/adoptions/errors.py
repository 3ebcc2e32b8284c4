"""Exception hierarchy. Each family maps onto a CLI exit code."""


class AdoptionsError(Exception):
    exit_code = 1


class ConfigError(AdoptionsError, ValueError):
    """Invalid parameters, contract terms or run configuration."""

    exit_code = 2


class InvalidDistributionError(ConfigError):
    pass


class DataError(AdoptionsError, ValueError):
    """Input data that cannot be used (bad CSV, nonpositive prices, ...)."""

    exit_code = 3


class InsufficientDataError(DataError):
    pass


class NumericalError(AdoptionsError, ArithmeticError):
    exit_code = 4


class ConvergenceError(NumericalError):
    """Raised when an iterative procedure stops before its criterion is met.

    ``best`` carries whatever best-found result is available.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DegenerateVarianceError(NumericalError):
    pass
