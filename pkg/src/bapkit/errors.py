"""Exception hierarchy shared by all bapkit modules."""


class BapkitError(Exception):
    """Base class for every error raised by bapkit."""


class InvalidModelError(BapkitError, ValueError):
    pass


class ConfigError(BapkitError, ValueError):
    pass


class NumericalBlowupError(BapkitError, ArithmeticError):
    """Integration produced a non-finite or non-physical state."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class DomainError(BapkitError, ValueError):
    """A state is outside the domain of a transform (h <= 0)."""


class OffManifoldError(DomainError):
    """A perturbation pushed the state off the physical manifold."""


class RankDeficiencyError(BapkitError, ArithmeticError):
    def __init__(self, message, columns=()):
        super().__init__(f"{message}; deficient columns: {list(columns)}")
        self.columns = list(columns)


class ConvergenceError(BapkitError, ArithmeticError):
    pass


class PreconditionError(BapkitError, ValueError):
    pass


class BreakdownError(BapkitError, ArithmeticError):
    """Repeated rank breakdown inside one Arnoldi loop."""


class DegeneratePerturbationError(BapkitError, ArithmeticError):
    pass


class InsufficientHistoryError(BapkitError, ValueError):
    pass


class UndefinedRatioError(BapkitError, ArithmeticError):
    pass


class VerificationError(BapkitError):
    pass
