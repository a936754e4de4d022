"""Exception and warning types shared across the package."""


class ConfigError(ValueError):
    """Invalid scenario, policy or command configuration."""


class InstabilityError(ValueError):
    """A queue is asked to run with service rate not exceeding its arrival rate."""


class InfeasibleError(ValueError):
    """Rate allocation problem has no feasible point."""


class NonConvergenceError(RuntimeError):
    """Iterative solver stopped at its iteration cap before reaching tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DomainError(ValueError):
    """Parameters fall outside the region where a closed form applies."""


class ModelSizeError(MemoryError):
    """Requested model would exceed the configured memory cap."""


class DivergentAoIWarning(RuntimeWarning):
    """An average age is infinite because some terminal never receives packets."""
