"""Particle-mesh reference solutions for the continuum vorticity.

``advance_lake`` transports quadrature particles along ``u - alpha*perp(grad b)/b``
with ``u`` reconstructed on the grid (deposit, elliptic solve, interpolate);
``advance_transport`` follows the level-set field ``-perp(grad b)/b`` only.
Particle weights are masses and never change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .depth import DepthField
from .elliptic import solve_lake_elliptic, velocity_from_stream
from .errors import DomainError, SupportEscape
from .grid import Grid, ScalarGrid, deposit, interpolate

FAMILIES = ("bump", "uniform-square")
_TAB = 2048


@dataclass(frozen=True)
class Omega0:
    """Initial vorticity profile (a probability density).

    ``bump``: ``3/(pi r^2) (1 - |x-c|^2/r^2)^2`` on the disk of radius r.
    ``uniform-square``: uniform on the square of half-width r.
    """

    family: str = "bump"
    radius: float = 1.0
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown omega0 family {self.family!r}; expected one of {FAMILIES}")
        if not self.radius > 0:
            raise DomainError("omega0 radius must be positive")
        c = tuple(float(v) for v in self.center)
        if len(c) != 2:
            raise DomainError("omega0 center must have two coordinates")
        object.__setattr__(self, "center", c)

    @classmethod
    def from_config(cls, block: dict) -> "Omega0":
        return cls(block.get("family", "bump"), float(block.get("radius", 1.0)),
                   tuple(block.get("center", (0.0, 0.0))))

    @property
    def bounds(self):
        """``(lo, hi)`` corners of the support's bounding square."""
        c = np.array(self.center)
        return c - self.radius, c + self.radius

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = x - np.array(self.center)
        r = self.radius
        if self.family == "bump":
            s = (d[..., 0] ** 2 + d[..., 1] ** 2) / r**2
            return np.where(s < 1.0, 3.0 / (math.pi * r * r) * (1.0 - s) ** 2, 0.0)
        inside = (np.abs(d[..., 0]) < r) & (np.abs(d[..., 1]) < r)
        return np.where(inside, 1.0 / (4.0 * r * r), 0.0)

    @property
    def max_density(self) -> float:
        r = self.radius
        return 3.0 / (math.pi * r * r) if self.family == "bump" else 1.0 / (4.0 * r * r)


@dataclass(frozen=True, eq=False)
class ContinuumVorticity:
    positions: np.ndarray
    weights: np.ndarray
    alpha: float = 0.0
    time: float = 0.0
    psi: ScalarGrid | None = field(default=None, repr=False)   # last stream function (warm start)

    def __post_init__(self):
        p = np.array(self.positions, dtype=float).reshape(-1, 2)
        w = np.array(self.weights, dtype=float).ravel()
        if len(p) != len(w):
            raise DomainError("positions and weights differ in length")
        if np.any(w < 0):
            raise DomainError("particle weights must be nonnegative")
        p.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "weights", w)

    @property
    def M(self) -> int:
        return len(self.weights)

    def deposit(self, geometry: Grid) -> ScalarGrid:
        return deposit(geometry, self.positions, self.weights)

    def check_support(self, box: float):
        if np.any(np.abs(self.positions) > box):
            raise SupportEscape(f"continuum particles left [-{box:g}, {box:g}]^2 at t={self.time:g}")


def quadrature_particles(omega0: Omega0, M: int, alpha: float = 0.0) -> ContinuumVorticity:
    """About ``M`` particles on a square lattice over the support, each weighted
    by the density at its cell center (normalized to unit mass)."""
    if M < 1:
        raise DomainError("M must be positive")
    lo, hi = omega0.bounds
    area = math.pi * omega0.radius**2 if omega0.family == "bump" else (2 * omega0.radius) ** 2
    k = max(1, int(round(2 * omega0.radius / math.sqrt(area / M))))
    delta = 2 * omega0.radius / k
    t = (np.arange(k) + 0.5) * delta
    X = np.stack(np.meshgrid(lo[0] + t, lo[1] + t, indexing="ij"), axis=-1).reshape(-1, 2)
    w = omega0.density(X)
    keep = w > 0
    X, w = X[keep], w[keep]
    return ContinuumVorticity(X, w / w.sum(), alpha)


def _tabulate(omega0: Omega0, box=None):
    lo, hi = omega0.bounds
    if box is not None:
        lo = np.maximum(lo, -box)
        hi = np.minimum(hi, box)
    if np.any(hi <= lo):
        raise DomainError("omega0 has zero mass in the box")
    e1 = np.linspace(lo[0], hi[0], _TAB + 1)
    e2 = np.linspace(lo[1], hi[1], _TAB + 1)
    c1 = 0.5 * (e1[1:] + e1[:-1])
    c2 = 0.5 * (e2[1:] + e2[:-1])
    rho = omega0.density(np.stack(np.meshgrid(c1, c2, indexing="ij"), axis=-1))
    if rho.sum() <= 0:
        raise DomainError("omega0 has zero mass in the box")
    return e1, e2, rho / rho.sum()


def _inverse_cdf(edges, mass, q):
    cdf = np.concatenate([[0.0], np.cumsum(mass)])
    cdf /= cdf[-1]
    # drop flat stretches so the inverse is single valued
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    return np.interp(q, cdf[keep], edges[keep])


def sample_vortices(omega0: Omega0, N: int, mode: str = "quadrature", seed: int = 0, box=None) -> np.ndarray:
    """N initial vortex positions distributed like ``omega0``.

    ``quadrature``: deterministic stratified placement.  The mass is cut into
    ``round(sqrt(N))`` columns by the x1-marginal, each column into equal-mass
    cells by its own x2-conditional law, and each point sits at the median of
    its cell's two quantile ranges.  ``iid``: rejection sampling seeded by
    ``seed``.  ``box`` (half-width) restricts omega0 to ``[-box, box]^2``.
    """
    if N < 1:
        raise DomainError("N must be positive")
    if mode == "iid":
        _tabulate(omega0, box)        # mass check
        rng = np.random.default_rng(seed)
        lo, hi = omega0.bounds
        if box is not None:
            lo, hi = np.maximum(lo, -box), np.minimum(hi, box)
        out = np.empty((0, 2))
        while len(out) < N:
            n_try = max(64, 2 * (N - len(out)))
            x = rng.uniform(lo, hi, size=(n_try, 2))
            u = rng.uniform(0.0, omega0.max_density, size=n_try)
            out = np.concatenate([out, x[u < omega0.density(x)]])
        return out[:N]
    if mode != "quadrature":
        raise DomainError("mode must be 'quadrature' or 'iid'")

    e1, e2, rho = _tabulate(omega0, box)
    cols = max(1, min(N, int(round(math.sqrt(N)))))
    counts = np.full(cols, N // cols)
    counts[: N % cols] += 1
    cum = np.concatenate([[0], np.cumsum(counts)]) / N          # column mass bounds
    marg = rho.sum(axis=1)
    mids = _inverse_cdf(e1, marg, 0.5 * (cum[1:] + cum[:-1]))
    cdf_edges = np.concatenate([[0.0], np.cumsum(marg)])
    cdf_edges /= cdf_edges[-1]
    pts = []
    for c in range(cols):
        # x2 mass inside the column, with fractional end cells
        a, b = cum[c], cum[c + 1]
        lo_frac = np.clip(np.minimum(cdf_edges[1:], b) - np.maximum(cdf_edges[:-1], a), 0.0, None)
        frac = np.divide(lo_frac, marg, out=np.zeros_like(marg), where=marg > 0)
        cond = (frac[:, None] * rho).sum(axis=0)
        k = counts[c]
        q = (np.arange(k) + 0.5) / k
        x2 = _inverse_cdf(e2, cond, q)
        pts.append(np.stack([np.full(k, mids[c]), x2], axis=-1))
    return np.concatenate(pts)


def lake_velocity(state: ContinuumVorticity, depth: DepthField, geometry: Grid, positions=None,
                  psi0: ScalarGrid | None = None, **solver):
    """Particle velocities ``u - alpha*perp(grad b)/b`` and the stream function."""
    p = state.positions if positions is None else positions
    omega = deposit(geometry, p, state.weights)
    psi = solve_lake_elliptic(depth, geometry, omega, psi0=psi0, **solver)
    u = velocity_from_stream(depth, psi).stacked()
    return interpolate(geometry, u, p) + state.alpha * depth.drift(p), psi


def advance_lake(state: ContinuumVorticity, depth: DepthField, geometry: Grid, dt: float,
                 box: float | None = None, **solver) -> ContinuumVorticity:
    """One RK2 (midpoint) step of the forced lake vorticity equation."""
    if not dt > 0:
        raise DomainError("dt must be positive")
    box = 0.5 * geometry.L if box is None else box
    v1, psi = lake_velocity(state, depth, geometry, psi0=state.psi, **solver)
    mid = state.positions + 0.5 * dt * v1
    if np.any(np.abs(mid) > box):
        raise SupportEscape(f"continuum particles left [-{box:g}, {box:g}]^2 at t={state.time + 0.5 * dt:g}")
    v2, psi = lake_velocity(state, depth, geometry, mid, psi0=psi, **solver)
    out = replace(state, positions=state.positions + dt * v2, time=state.time + dt, psi=psi)
    out.check_support(box)
    return out


def advance_transport(state: ContinuumVorticity, depth: DepthField, dt: float) -> ContinuumVorticity:
    """One RK4 step along ``-perp(grad b)/b``."""
    if not dt > 0:
        raise DomainError("dt must be positive")
    q = state.positions
    k1 = depth.drift(q)
    k2 = depth.drift(q + 0.5 * dt * k1)
    k3 = depth.drift(q + 0.5 * dt * k2)
    k4 = depth.drift(q + dt * k3)
    return replace(state, positions=q + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4),
                   time=state.time + dt, psi=None)


def evolve(state: ContinuumVorticity, depth: DepthField, geometry: Grid | None, dt: float,
           sample_times, kind: str = "lake", box: float | None = None, **solver):
    """Advance to each time in ``sample_times`` (ascending, multiples of ``dt``
    from ``state.time``); returns the list of states at those times."""
    out = []
    cur = state
    for ts in sample_times:
        steps = int(round((ts - cur.time) / dt))
        for _ in range(steps):
            if kind == "lake":
                cur = advance_lake(cur, depth, geometry, dt, box=box, **solver)
            else:
                cur = advance_transport(cur, depth, dt)
        cur = replace(cur, time=float(ts))
        out.append(cur)
    return out
