"""Point vortices over a variable-depth lake: kernel tables, dynamics, diagnostics."""

__version__ = "0.1.0"

from .depth import DepthField, depth_eval, perp, validate_depth
from .errors import (CacheMismatch, CollisionImminent, DiagonalSingularity, DomainError,
                     GeometryMismatch, LakeVortexError, NonConvergence, OutOfDomain,
                     SupportEscape, ValidationFailure)
from .grid import Grid, ScalarGrid, VectorGrid

__all__ = [
    "DepthField", "depth_eval", "perp", "validate_depth", "Grid", "ScalarGrid", "VectorGrid",
    "LakeVortexError", "DomainError", "ValidationFailure", "GeometryMismatch", "NonConvergence",
    "OutOfDomain", "DiagonalSingularity", "CollisionImminent", "SupportEscape", "CacheMismatch",
]
