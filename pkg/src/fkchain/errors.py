"""Exception hierarchy.

Every error raised on purpose by the package derives from `FKChainError`,
so callers (and the CLI) can separate modelling failures from bugs.
"""


class FKChainError(Exception):
    """Base class for all package errors."""


class ConfigError(FKChainError):
    """Invalid parameters or configuration."""


class DomainError(ConfigError):
    """A scalar parameter is outside its admissible range."""


class TruncationError(FKChainError):
    """A requested object does not fit inside the guard window."""


class DisconnectedError(FKChainError):
    """No path between two states inside the window."""


class DegreeError(FKChainError):
    """A graph vertex has zero degree."""


class CapacityError(FKChainError):
    """The requested window exceeds the memory budget."""


class SummabilityError(FKChainError):
    """A distance profile is not summable on the lattice."""


class PositivityError(FKChainError):
    """A quantity required to be strictly positive is not."""


class InsufficientDepthError(FKChainError):
    """A series truncation leaves more mass than allowed.

    Attributes
    ----------
    required : int or None
        Estimated truncation depth that would meet the tolerance.
    """

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class InsufficientWindowError(FKChainError):
    """The window is too small to certify a statement.

    Attributes
    ----------
    required_level : float or None
        Potential level that the window boundary would need to reach.
    """

    def __init__(self, message, required_level=None):
        super().__init__(message)
        self.required_level = required_level


class InsufficientDataError(FKChainError):
    """Too few distance classes or samples for a fit."""


class PreconditionError(FKChainError):
    """An input violates a documented precondition."""


class NoConvergenceError(FKChainError):
    """An iteration lacks a contraction guarantee."""


class ConvergenceError(FKChainError):
    """An iteration ran out of steps or diverged."""


class CertificateError(FKChainError):
    """Certified constants could not be produced."""
