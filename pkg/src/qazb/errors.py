"""Exception types shared across the package."""


class QazbError(Exception):
    """Base class for all errors raised by qazb."""


class ParameterError(QazbError, ValueError):
    """Invalid lattice or solver parameters."""


class RayError(QazbError, ValueError):
    """A complex number does not lie on one of the rays q^k R_+ (or at 0)."""


class NormalityError(QazbError, ValueError):
    """A matrix expected to be normal is not, within tolerance.

    The measured relative commutator norm is kept in ``residual``.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CommutationError(QazbError, ValueError):
    """A family expected to commute does not."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class PreconditionError(QazbError, ValueError):
    """An operation's precondition failed (kernel present, bad dims, ...)."""


class MemoryBudgetError(QazbError, RuntimeError):
    """Dense evaluation refused because it exceeds the configured budget."""


class DecompositionError(QazbError, RuntimeError):
    """A decomposition stage failed its gate.

    ``report`` holds every residual measured up to the failing stage.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


class ConvergenceError(QazbError, RuntimeError):
    """The qexp solver did not reach its residual threshold.

    ``best`` carries the best table found.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class FormatError(QazbError, ValueError):
    """A model or report file is malformed or has an unsupported version."""
