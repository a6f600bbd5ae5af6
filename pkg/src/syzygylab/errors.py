"""Exception types shared across the package."""


class SyzygyLabError(Exception):
    """Base class for all package-specific errors."""


class CollisionSingularity(SyzygyLabError):
    """Two bodies are closer than the hard distance floor."""


class TripleCollision(SyzygyLabError):
    """The configuration size is below the triple-collision floor."""


class BinaryCollision(SyzygyLabError):
    """A pair distance vanished where a regular value was required."""


class NotCollinear(SyzygyLabError):
    """A collinear configuration was required but not supplied."""


class AmbiguousSyzygy(SyzygyLabError):
    """Two bodies coincide, so no middle body can be named."""


class SamplingExhausted(SyzygyLabError):
    """Initial-condition rejection sampling hit its retry budget."""


class RegularizationBreakdown(SyzygyLabError):
    """The third body intruded into the regularized two-body chart."""


class PropagationFailure(SyzygyLabError):
    """The integrator gave up (step budget or error-control collapse)."""


class PastCollision(SyzygyLabError):
    """A Kepler fall was evaluated beyond its collision time."""


class HypothesisViolation(SyzygyLabError):
    """A comparison-problem hypothesis failed numerical validation."""


class NoFarSegment(SyzygyLabError):
    """The trajectory never reaches the requested outer distance."""


class NoExcursion(SyzygyLabError):
    """The trajectory has no interval with size above the threshold."""
