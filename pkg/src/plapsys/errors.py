"""Exception hierarchy shared by all modules."""


class PlapsysError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(PlapsysError, ValueError):
    """Malformed mesh, solver or run configuration."""


class NonIntegrableExponentError(PlapsysError, ValueError):
    """A distance weight d(x)^mu with mu <= -1 was requested."""


class HypothesisViolation(PlapsysError, ValueError):
    """Exponents outside the admissible band of a construction."""


class DomainError(PlapsysError, ValueError):
    """Nonlinearity evaluated outside the positive cone."""


class SpecInvalidError(PlapsysError, ValueError):
    """A nonlinearity breaks its declared two-sided growth envelope."""

    def __init__(self, message, sample=None):
        super().__init__(message)
        self.sample = sample


class InadmissibleSpecError(PlapsysError):
    """The system parameters fail the admissibility conditions."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class IterationLimitError(PlapsysError, RuntimeError):
    """An iterative procedure stopped before reaching its tolerance.

    The last iterate and its residual are kept so callers can inspect or
    restart from them.
    """

    def __init__(self, message, iterate=None, residual=None, history=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual
        self.history = history if history is not None else []


class BarrierFailure(PlapsysError, RuntimeError):
    """A barrier function could not be made positive."""


class ClosureFailure(PlapsysError, RuntimeError):
    """No rectangle constant in the search range closes the inequalities."""

    def __init__(self, message, blocking=None):
        super().__init__(message)
        self.blocking = blocking


class CalibrationError(PlapsysError, RuntimeError):
    """Every calibration sample failed."""
