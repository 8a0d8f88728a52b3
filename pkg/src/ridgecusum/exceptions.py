"""Exception hierarchy; CLI exit codes hang off these classes."""


class RidgeCusumError(Exception):
    exit_code = 1


class ValidationError(RidgeCusumError, ValueError):
    """Bad input or configuration."""

    exit_code = 2


class DegenerateDataError(RidgeCusumError, ArithmeticError):
    """Numeric degeneracy, e.g. a zero pooled covariance or a non-positive variance estimate."""

    exit_code = 3


class ConvergenceError(DegenerateDataError):
    pass


class CacheIOError(RidgeCusumError, OSError):
    exit_code = 4
