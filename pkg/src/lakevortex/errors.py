"""Exception types shared across the package."""


class LakeVortexError(Exception):
    """Base class for all errors raised by lakevortex."""


class DomainError(LakeVortexError, ValueError):
    """An argument lies outside the domain of the operation."""


class ValidationFailure(LakeVortexError):
    """A depth field (or other input) violates its standing assumptions."""


class GeometryMismatch(LakeVortexError, ValueError):
    """Two grids that must share geometry do not."""


class NonConvergence(LakeVortexError):
    """The fixed-point elliptic iteration did not reach tolerance."""

    def __init__(self, message, iterations=None, source_index=None):
        super().__init__(message)
        self.iterations = iterations
        self.source_index = source_index


class OutOfDomain(LakeVortexError, ValueError):
    """A point lies outside the box covered by a kernel table."""


class DiagonalSingularity(LakeVortexError, ValueError):
    """The log kernel was evaluated on (or numerically at) the diagonal."""


class CollisionImminent(LakeVortexError):
    """Two vortices came closer than the collision threshold."""

    def __init__(self, message, time=None, min_separation=None):
        super().__init__(message)
        self.time = time
        self.min_separation = min_separation


class SupportEscape(LakeVortexError):
    """Continuum particles left the safety box."""


class CacheMismatch(LakeVortexError):
    """A kernel cache file does not match the requested depth/geometry or is corrupt."""
