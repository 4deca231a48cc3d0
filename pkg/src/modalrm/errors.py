"""Exception hierarchy.

Validation problems (bad inputs) and numerical failures (non-convergence,
singular matrices, integration breakdown) are kept apart so the CLI can map
them onto distinct exit codes.
"""


class ModalError(Exception):
    """Base class for all package errors."""


class ValidationError(ModalError, ValueError):
    """Input violates a documented precondition."""


class NumericalError(ModalError, RuntimeError):
    """A numerical procedure failed to produce a trustworthy result."""


class IntegrationError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class SingularityError(NumericalError):
    """A matrix that must be inverted is singular or too ill-conditioned."""
