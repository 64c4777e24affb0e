"""
Exceptions and warnings raised by the CRP solvers.
"""


class CrpError(Exception):
    """Base class for every error raised by the crp package."""


class InvalidParameterError(CrpError, ValueError):
    """A domain object or argument violates its invariants."""


class GridMismatchError(InvalidParameterError):
    """Two sampled functions were expected to share a time grid and do not."""


class IntegrationError(CrpError, ArithmeticError):
    """A trajectory became non-finite during fixed-step integration."""


class CrpWarning(UserWarning):
    """Base class for soft conditions that do not stop a computation."""


class ParameterWarning(CrpWarning):
    """An instance is valid but departs from the model's usual assumptions."""


class GridBoundWarning(CrpWarning):
    """A dynamic-programming successor state fell outside the state grid."""
