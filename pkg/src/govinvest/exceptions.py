"""Exception hierarchy shared by every module."""


class ModelError(Exception):
    """Base class for all domain and solver failures."""


class DomainError(ModelError, ValueError):
    """An input lies outside the domain of a model primitive."""


class ParameterError(DomainError):
    """A parameter vector violates one of its invariants."""


class InfeasibleError(ModelError):
    """A state transition or regime has no admissible value."""


class ConvergenceError(ModelError, RuntimeError):
    """An iterative solver stopped without meeting its tolerance.

    ``diagnostics`` carries whatever the solver knew when it gave up
    (last iterate, residual vector, iteration count).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class SimulationError(ModelError):
    """A step error raised while simulating, tagged with its period."""

    def __init__(self, t, cause):
        super().__init__(f"t={t}: {cause}")
        self.t = t
        self.cause = cause
