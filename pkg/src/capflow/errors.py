"""Exception hierarchy for the engine."""


class CapflowError(Exception):
    """Base class for every error raised by the engine."""


class DomainError(CapflowError, ValueError):
    """Argument lies outside the domain of a function or grid."""


class TruncationEscape(DomainError):
    """Mass keeps leaving the truncated grid even after repeated expansion."""


class NoConvergence(CapflowError, ArithmeticError):
    """An iterative procedure stopped before meeting its tolerance."""


class NoFixedPoint(CapflowError, ValueError):
    """The transmission map has no fixed point in the scanned interval."""


class TangentPresent(CapflowError, ValueError):
    """A fixed point with unit slope blocks the classification."""


class ConfigError(CapflowError, ValueError):
    """Malformed scenario configuration or invalid construction arguments."""


class ParamError(CapflowError, ValueError):
    """Model parameters outside their admissible range."""


class ZeroMass(CapflowError, ValueError):
    """A distribution with no mass cannot be normalized."""


class GridMismatch(CapflowError, ValueError):
    """Two distributions live on different grids."""


class UndefinedRatio(CapflowError, ValueError):
    """A likelihood ratio is undefined inside the support."""


class EmptyIntervalMass(CapflowError, ValueError):
    """The initial distribution puts no mass on a nonempty interval."""


class OptimMismatch(CapflowError, AssertionError):
    """A brute-force probe beat the closed-form household optimum."""


class InteriorityViolation(CapflowError, ValueError):
    """The lower support of capital fell below one."""
