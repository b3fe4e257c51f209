"""Exception types shared across the package."""


class FuzzyEulerError(Exception):
    """Base class for package errors."""


class IntegrityError(FuzzyEulerError):
    """Non-finite values appeared in a simulation state."""


class PositivityError(FuzzyEulerError):
    """The density became nonpositive somewhere on the grid."""


class StepSizeError(FuzzyEulerError):
    """The requested time step violates the stability bound."""

    def __init__(self, message: str, admissible_dt: float):
        super().__init__(f"{message} (admissible dt <= {admissible_dt:.6g})")
        self.admissible_dt = admissible_dt


class ConfigError(FuzzyEulerError):
    """Invalid run configuration."""
