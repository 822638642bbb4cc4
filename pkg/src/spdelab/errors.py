"""Exception types raised across the package."""


class SpdeLabError(Exception):
    """Base class for all package errors."""


class ParameterError(SpdeLabError, ValueError):
    """Invalid parameter or parameter combination."""


class ShapeError(SpdeLabError, ValueError):
    """Array shape does not match the spectral space."""


class NumericalDomainError(SpdeLabError, ArithmeticError):
    """Non-finite value encountered during evaluation.

    ``location`` names the offending mode or grid index when known.
    """

    def __init__(self, message, location=None):
        super().__init__(message if location is None else f"{message} (at {location})")
        self.location = location


class DegeneracyError(SpdeLabError, ArithmeticError):
    """Noise coefficient numerically zero, so the noise cannot be inverted."""


class StepFailure(SpdeLabError, RuntimeError):
    """Implicit step did not converge even at the smallest allowed step."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InsufficientDataError(SpdeLabError, ValueError):
    """Too few usable data points for a fit."""


class ConfigError(SpdeLabError, ValueError):
    """Experiment configuration is invalid; ``violations`` lists every problem."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.violations))
