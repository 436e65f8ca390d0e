"""Exception types shared across the package."""


class GlhmError(Exception):
    """Base class for all package errors."""


class NearFocalSet(GlhmError):
    """Nearest-point projection requested too close to the focal point."""


class NormalizationFailure(GlhmError):
    """Kernel normalization quadrature did not converge."""


class QuadratureFailure(GlhmError):
    """A one-dimensional quadrature failed to converge."""


class SupportViolation(GlhmError):
    """A test vector field touches the domain boundary."""


class SupportOutOfDomain(GlhmError):
    """Kernel support ball of a probe sticks out of the grid box."""


class BallOutOfDomain(GlhmError):
    """A probe ball sticks out of the grid box."""


class RankMismatch(GlhmError):
    """Projectors of different rank compared."""


class NotIndependent(GlhmError):
    """Probe points fail the linear-independence-at-scale condition."""


class LadderExhausted(GlhmError):
    """Dyadic drop-scale ladder ran out of scales without a qualifying drop."""


class NoConvergence(GlhmError):
    """Iterative center refinement did not converge."""


class LeftBasin(GlhmError):
    """Center refinement wandered too far from its starting point."""


class OverlappingSubBalls(GlhmError):
    """Bubble sub-balls are required to be pairwise disjoint."""


class ShellOutOfDomain(GlhmError):
    """A boundary-integral shell sticks out of the grid box."""


class CircleOutOfDomain(GlhmError):
    """An angular-energy circle sticks out of the grid box."""


class ZeroAngularEnergy(GlhmError):
    """Angular energy vanishes at a probe; the probe must be skipped."""


class SnapshotFormatError(GlhmError):
    """Field snapshot file is malformed."""


class ConfigError(GlhmError):
    """Run configuration file is malformed or carries unknown keys."""
