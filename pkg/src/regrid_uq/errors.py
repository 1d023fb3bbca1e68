"""Exception hierarchy shared by the toolkit.

Every error the CLI can surface maps onto one of three exit codes
(validation, numeric failure, I/O); see ``regrid_uq.cli``.
"""


class RegridError(Exception):
    """Base class for toolkit errors."""


class InvalidArgument(RegridError, ValueError):
    """A precondition on an argument was violated."""


class ConfigError(InvalidArgument):
    """Malformed configuration, manifest or model file."""


class AlignmentError(InvalidArgument):
    """Data sources do not share the same set of days."""


class NumericError(RegridError, ArithmeticError):
    """A numerical procedure failed."""


class IllConditionedCovariance(NumericError):
    """Covariance factorization failed even after jitter escalation."""


class InvalidCovariance(NumericError):
    """A covariance matrix is not positive semidefinite within tolerance."""


class SingularDesign(NumericError):
    """Regression design does not have full column rank."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)
