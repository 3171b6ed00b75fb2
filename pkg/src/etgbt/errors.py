"""Exception types shared across the package."""


class EtgbtError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(EtgbtError):
    pass


class NotPositiveDefinite(EtgbtError):
    def __init__(self, which: str, min_eig: float):
        super().__init__(f"{which} is not positive definite (min eigenvalue {min_eig:.3e})")
        self.which = which
        self.min_eig = min_eig


class NotControllable(EtgbtError):
    pass


class NotObservable(EtgbtError):
    pass


class DegenerateObservation(EtgbtError):
    pass


class NotPSD(EtgbtError):
    pass


class NumericalSingularity(EtgbtError):
    pass


class CholeskyFailure(EtgbtError):
    pass


class BoundDiverged(EtgbtError):
    """Scalar covariance bound exceeded the divergence guard.

    Carries the step index at which the recursion blew up so planners can
    reject the offending edge instead of propagating infinities.
    """

    def __init__(self, step: int, value: float):
        super().__init__(f"covariance bound diverged at step {step} (lambda_bar {value:.3e})")
        self.step = step
        self.value = value


class HorizonTooLarge(EtgbtError):
    pass


class PlacementFailure(EtgbtError):
    pass


class NoSolution(EtgbtError):
    """Planner budget exhausted without a goal-reaching node.

    ``stats`` holds tree diagnostics (iterations, node counts, ...).
    """

    def __init__(self, message: str, stats: dict):
        super().__init__(message)
        self.stats = stats


class ScenarioError(EtgbtError):
    """Scenario or plan file failed validation; message names the field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ReplayMismatch(EtgbtError):
    pass
