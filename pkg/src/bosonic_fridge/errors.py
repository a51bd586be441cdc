"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operator/state dimension is invalid or inconsistent with its space."""


class ModeLabelError(KeyError):
    """Unknown mode label for a Fock space."""


class StiffnessError(RuntimeError):
    """Adaptive integrator step size underflowed."""


class SteadyStateError(RuntimeError):
    """Steady-state solve failed."""


class MultiplicityError(SteadyStateError):
    """The steady space is degenerate (singular beyond the trace constraint)."""


class ConvergenceError(SteadyStateError):
    """Iterative solver hit its iteration limit."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CertificationError(RuntimeError):
    """Truncation certification exceeded its memory budget."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class TruncationError(ValueError):
    """A computation needs a larger truncated space than was supplied."""


class FitError(RuntimeError):
    """Coupling fit failed to bracket a minimum."""

    def __init__(self, message, scan=None):
        super().__init__(message)
        self.scan = scan or []
