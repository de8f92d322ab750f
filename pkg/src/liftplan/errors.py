"""Exception hierarchy shared across the package."""


class LiftPlanError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(LiftPlanError, ValueError):
    """Array dimensions are inconsistent with the problem data."""


class DomainError(LiftPlanError, ValueError):
    """Scalar argument outside its valid domain (probabilities, risk levels, ...)."""


class NotPSDError(LiftPlanError, ValueError):
    """A matrix required to be positive (semi)definite is not."""


class ConfigError(LiftPlanError, ValueError):
    """Scenario / problem configuration is invalid."""


class UnsupportedConstraintError(LiftPlanError, ValueError):
    """Constraint cannot be represented by the requested method."""


class ReplayError(LiftPlanError, RuntimeError):
    """A trajectory is inconsistent with the dynamics it claims to satisfy."""
