"""Exception hierarchy shared by all modules."""


class ConfigurationError(ValueError):
    """Invalid or unsupported configuration."""


class DomainError(ValueError):
    """Argument outside the domain where an operation is defined."""


class NumericalError(ArithmeticError):
    """A numerical routine failed (non-convergence, singular solve, ...)."""


class StiffnessError(NumericalError):
    """SDE integrator could not keep particles ordered."""

    def __init__(self, message, min_gap=None):
        super().__init__(message)
        self.min_gap = min_gap


class TuningError(NumericalError):
    """Metropolis proposal tuning ended with an unusable acceptance rate."""


class CFLError(NumericalError):
    """Explicit time step exceeds the stability bound of the grid."""
