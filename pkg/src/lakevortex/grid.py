"""Uniform square grids on [-L, L)^2 and particle/grid transfer.

Node ``(i, j)`` sits at ``(-L + i*h, -L + j*h)`` with ``h = 2L/n``; arrays
are indexed ``values[i, j]`` (first index along x1), row-major.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, GeometryMismatch


@dataclass(frozen=True)
class Grid:
    n: int
    L: float

    def __post_init__(self):
        n = int(self.n)
        if n < 4 or n & (n - 1):
            raise DomainError(f"grid size n must be a power of two >= 4, got {self.n}")
        if not (np.isfinite(self.L) and self.L > 0):
            raise DomainError("grid half-width L must be positive")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n)

    @cached_property
    def points(self) -> np.ndarray:
        x = self.nodes
        return np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1)

    def index_of(self, coord: float) -> int:
        """Index of the node at ``coord`` (must be an exact node)."""
        u = (coord + self.L) / self.h
        i = int(round(u))
        if abs(u - i) > 1e-9 or not 0 <= i < self.n:
            raise DomainError(f"{coord} is not a grid node")
        return i

    @classmethod
    def from_config(cls, block: dict) -> "Grid":
        return cls(int(block.get("n", 256)), float(block.get("L", 8.0)))


@dataclass(frozen=True, eq=False)
class ScalarGrid:
    geometry: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.geometry.n, self.geometry.n):
            raise GeometryMismatch(f"values of shape {v.shape} do not match n={self.geometry.n}")
        object.__setattr__(self, "values", v)

    def __add__(self, other):
        same_geometry(self, other)
        return ScalarGrid(self.geometry, self.values + other.values)

    def __sub__(self, other):
        same_geometry(self, other)
        return ScalarGrid(self.geometry, self.values - other.values)

    def __mul__(self, c):
        return ScalarGrid(self.geometry, self.values * c)

    __rmul__ = __mul__

    def integral(self) -> float:
        return float(self.values.sum() * self.geometry.h**2)


@dataclass(frozen=True, eq=False)
class VectorGrid:
    u1: ScalarGrid
    u2: ScalarGrid

    def __post_init__(self):
        same_geometry(self.u1, self.u2)

    @property
    def geometry(self) -> Grid:
        return self.u1.geometry

    def stacked(self) -> np.ndarray:
        return np.stack([self.u1.values, self.u2.values], axis=-1)


def same_geometry(*grids):
    g0 = grids[0].geometry
    for g in grids[1:]:
        if g.geometry != g0:
            raise GeometryMismatch(f"grid geometry {g.geometry} differs from {g0}")
    return g0


def zeros(geometry: Grid) -> ScalarGrid:
    return ScalarGrid(geometry, np.zeros((geometry.n, geometry.n)))


def sample(geometry: Grid, fn) -> ScalarGrid:
    """Sample ``fn(points)`` (points of shape (n, n, 2)) on the grid."""
    return ScalarGrid(geometry, fn(geometry.points))


def centered_gradient(values: np.ndarray, h: float):
    """Second-order centered differences (one-sided second order at the edges)."""
    return np.gradient(values, h, edge_order=2)


def _cell_coords(geometry: Grid, points):
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    u = (pts + geometry.L) / geometry.h
    i = np.floor(u).astype(np.int64)
    if np.any(i < 0) or np.any(i > geometry.n - 2):
        raise DomainError("points fall outside the interpolation range of the grid")
    return i, u - i


def deposit(geometry: Grid, points, weights) -> ScalarGrid:
    """Bilinear (cloud-in-cell) deposit of weighted points as a density."""
    n = geometry.n
    i, t = _cell_coords(geometry, points)
    w = np.asarray(weights, dtype=float).ravel()
    wx = (1.0 - t[:, 0], t[:, 0])
    wy = (1.0 - t[:, 1], t[:, 1])
    acc = np.zeros(n * n)
    # fixed accumulation order keeps deposits bit-reproducible
    for di in (0, 1):
        for dj in (0, 1):
            idx = (i[:, 0] + di) * n + (i[:, 1] + dj)
            acc += np.bincount(idx, weights=w * wx[di] * wy[dj], minlength=n * n)
    return ScalarGrid(geometry, acc.reshape(n, n) / geometry.h**2)


def interpolate(geometry: Grid, values: np.ndarray, points) -> np.ndarray:
    """Bilinear interpolation of node values at ``points``; trailing axes of
    ``values`` beyond the first two are carried along."""
    pts = np.asarray(points, dtype=float)
    i, t = _cell_coords(geometry, pts)
    v = np.asarray(values)
    tx = t[:, 0].reshape((-1,) + (1,) * (v.ndim - 2))
    ty = t[:, 1].reshape((-1,) + (1,) * (v.ndim - 2))
    i0, j0 = i[:, 0], i[:, 1]
    out = ((1 - tx) * (1 - ty) * v[i0, j0] + tx * (1 - ty) * v[i0 + 1, j0]
           + (1 - tx) * ty * v[i0, j0 + 1] + tx * ty * v[i0 + 1, j0 + 1])
    return out.reshape(pts.shape[:-1] + v.shape[2:])
