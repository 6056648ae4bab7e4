"""Exception hierarchy shared by every signflow module."""

from __future__ import annotations


class SignflowError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SignflowError, ValueError):
    """Scenario configuration is malformed or internally inconsistent."""


class UnderResolvedGrid(SignflowError, ValueError):
    pass


class InvalidCoefficient(SignflowError, ValueError):
    pass


class InvalidBoundary(SignflowError, ValueError):
    """Boundary descriptor violates the sign condition or mismatches the degeneracy."""


class RegistrationRejected(SignflowError, ValueError):
    """A nonlinearity failed its growth-bound spot check."""


class StepRejected(SignflowError, ValueError):
    """Requested time step exceeds the explicit-reaction stability bound."""


class BlowUp(SignflowError, ArithmeticError):
    """State became non-finite; carries the last time with a finite state."""

    def __init__(self, message: str, last_finite_time: float):
        super().__init__(message)
        self.last_finite_time = last_finite_time


class EigenFailure(SignflowError, RuntimeError):
    pass


class UnsupportedPropagation(SignflowError, NotImplementedError):
    pass


class SlopeFault(SignflowError, ArithmeticError):
    """Spatial slope at a sign change is below the floor; the curve is lost."""


class SeparationViolation(SignflowError, ValueError):
    pass


class SignPatternMismatch(SignflowError, ValueError):
    """Two profiles do not share the same ordered sign-change pattern."""


class InvalidAmplification(SignflowError, ValueError):
    pass


class DomainFault(SignflowError, ValueError):
    pass


class ControllerFailure(SignflowError, RuntimeError):
    """The preserving controller could not reach the accuracy budget."""

    def __init__(self, message: str, best_error: float, plan=None, schedule=None, state=None):
        super().__init__(message)
        self.best_error = best_error
        self.plan = plan
        self.schedule = schedule
        self.state = state


class SteeringFailure(SignflowError, RuntimeError):
    """Steering did not meet its tolerance; `diagnostics` holds the partial record."""

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics
