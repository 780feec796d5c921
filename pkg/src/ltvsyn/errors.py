"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 2, NumericalError -> 3,
InfeasibleError -> 4.
"""


class LtvSynError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(LtvSynError, ValueError):
    """Invalid user configuration (bad paths, out-of-range settings)."""


class DomainError(LtvSynError, ValueError):
    """Evaluation outside the stored horizon or table range."""


class ParameterError(LtvSynError, ValueError):
    """Invalid numeric parameter (e.g. non-positive multiplier weight)."""


class NumericalError(LtvSynError, RuntimeError):
    """Numerical failure that is not an infeasibility verdict."""


class DivergenceError(NumericalError):
    """Integrator blow-up; carries the escape time."""

    def __init__(self, msg, escape_time=None):
        super().__init__(msg)
        self.escape_time = escape_time


class WellPosednessError(NumericalError):
    """Singular algebraic loop in a feedback interconnection."""


class LinearizationError(NumericalError):
    """Non-finite model output while forming finite differences."""

    def __init__(self, msg, time=None, argument=None):
        super().__init__(msg)
        self.time = time
        self.argument = argument


class FactorizationError(NumericalError):
    """A matrix that must be positive definite is not."""


class AssumptionError(NumericalError):
    """Plant violates a structural assumption of the synthesis machinery."""


class MonotonicityError(NumericalError):
    """Feasibility observed to be non-monotone in gamma (implementation bug)."""


class SdpSolverError(NumericalError):
    """Conic solver failed to converge (distinct from infeasibility)."""


class InfeasibleError(LtvSynError, RuntimeError):
    """A synthesis or analysis problem has no feasible solution."""


class SynthesisInfeasibleError(InfeasibleError):
    """No admissible controller at the top of the gamma range."""


class UnboundedGainError(InfeasibleError):
    """No certified gain bound below the configured cap."""


class TrajectoryError(LtvSynError, ValueError):
    """Reference trajectory inconsistent with the model or actuator limits."""
