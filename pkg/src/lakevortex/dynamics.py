"""Point-vortex dynamics over a variable-depth lake.

Each of the N vortices has strength 1/N.  In the physical regime

    dq_i/dt = alpha * V(q_i) - (1/N) (1/b(q_i)) sum_{j != i} perp(grad_x g_b(q_i, q_j))

with the level-set drift ``V = -perp(grad b)/b``.  The rescaled regime uses
drift ``V`` and divides the interaction by ``alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import _pairs
from .depth import DepthField
from .errors import CollisionImminent, DomainError
from .kernel import KernelTable, field_sums

REGIMES = ("physical", "rescaled")
COLLISION_FACTOR = 1e-10


@dataclass(frozen=True)
class VortexEnsemble:
    positions: np.ndarray
    alpha: float = 0.0
    regime: str = "physical"
    time: float = 0.0

    def __post_init__(self):
        q = np.array(self.positions, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(q)):
            raise DomainError("vortex positions must be finite")
        q.setflags(write=False)
        object.__setattr__(self, "positions", q)
        if self.regime not in REGIMES:
            raise DomainError(f"regime must be one of {REGIMES}")
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise DomainError("alpha must be a nonnegative number")
        if self.regime == "rescaled" and self.alpha == 0:
            raise DomainError("the rescaled regime needs alpha > 0")

    @property
    def N(self) -> int:
        return len(self.positions)

    def moved(self, positions, dt) -> "VortexEnsemble":
        return replace(self, positions=positions, time=self.time + dt)


def alpha_from_epsilon(epsilon: float, N: int) -> float:
    """``|ln eps| / (4 pi N)``."""
    if not 0.0 < epsilon < 1.0:
        raise DomainError("epsilon must lie in (0, 1)")
    if N < 1:
        raise DomainError("N must be positive")
    return abs(math.log(epsilon)) / (4.0 * math.pi * N)


def _threshold(table: KernelTable, threshold):
    return COLLISION_FACTOR * table.geometry.L if threshold is None else threshold


def _rhs(q, alpha, regime, N, table, depth, threshold, t=0.0):
    if N > 1:
        _, grad, min_r2 = field_sums(table, depth, q, q, np.full(N, 1.0 / N), np.arange(N),
                                       potential=False)
        if math.sqrt(min_r2) < threshold:
            raise CollisionImminent(f"vortices within {math.sqrt(min_r2):.3e} at t={t:g}",
                                    time=t, min_separation=math.sqrt(min_r2))
        inter = np.stack([grad[:, 1], -grad[:, 0]], axis=-1) / depth.b(q)[:, None]
    else:
        inter = np.zeros_like(q)
    drift = depth.drift(q)
    if regime == "physical":
        return alpha * drift + inter
    return drift + inter / alpha


def pv_rhs(state: VortexEnsemble, table: KernelTable, depth: DepthField, threshold=None) -> np.ndarray:
    """Velocities of all vortices, shape (N, 2)."""
    return _rhs(state.positions, state.alpha, state.regime, state.N, table, depth,
                _threshold(table, threshold), state.time)


def step_rk4(state: VortexEnsemble, dt: float, table: KernelTable, depth: DepthField,
             threshold=None) -> VortexEnsemble:
    """One classical RK4 step.  Negative ``dt`` integrates backwards."""
    if dt == 0 or not np.isfinite(dt):
        raise DomainError("dt must be finite and nonzero")
    thr = _threshold(table, threshold)
    args = (state.alpha, state.regime, state.N, table, depth, thr, state.time)
    q = state.positions
    k1 = _rhs(q, *args)
    k2 = _rhs(q + 0.5 * dt * k1, *args)
    k3 = _rhs(q + 0.5 * dt * k2, *args)
    k4 = _rhs(q + dt * k3, *args)
    return state.moved(q + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), dt)


def min_separation(state) -> float:
    q = state.positions if isinstance(state, VortexEnsemble) else np.asarray(state, dtype=float)
    if len(q) < 2:
        raise DomainError("min_separation needs at least two vortices")
    return float(_pairs.min_pair_distance(np.ascontiguousarray(q[:, 0]), np.ascontiguousarray(q[:, 1])))


def default_dt(positions) -> float:
    """``min(1e-2, 0.1 * 2 pi * d_min^2)``: a tenth of the closest pair's turnover."""
    q = np.asarray(positions, dtype=float)
    if len(q) < 2:
        return 1e-2
    d = min_separation(q)
    return min(1e-2, 0.1 * d * d * 2.0 * math.pi)


@dataclass
class Trajectory:
    times: np.ndarray
    positions: np.ndarray            # (samples, N, 2)
    dt: float
    complete: bool = True
    error: Exception | None = field(default=None, repr=False)

    def states(self, alpha=0.0, regime="physical"):
        return [VortexEnsemble(p, alpha, regime, t) for t, p in zip(self.times, self.positions)]


def simulate(state: VortexEnsemble, table: KernelTable, depth: DepthField, T: float, dt: float,
             sample_every: int = 1, threshold=None, on_sample: Callable | None = None) -> Trajectory:
    """Fixed-step RK4 from ``state.time`` over a span ``T``.

    The step count is ``round(T/dt)`` and the step is adjusted to land on
    ``T`` exactly.  Positions are recorded every ``sample_every`` steps
    (plus the initial state).  A near-collision stops the run and returns the
    samples so far with ``complete=False``.
    """
    if T < 0 or not np.isfinite(T):
        raise DomainError("T must be a nonnegative number")
    if not dt > 0:
        raise DomainError("dt must be positive")
    if sample_every < 1:
        raise DomainError("sample_every must be >= 1")
    nsteps = int(round(T / dt)) if T > 0 else 0
    if T > 0:
        nsteps = max(nsteps, 1)
        dt = T / nsteps
    thr = _threshold(table, threshold)
    times = [state.time]
    samples = [np.array(state.positions)]
    if on_sample is not None:
        on_sample(state)

    if nsteps and _euler_fast_path(state, table, depth):
        w = np.full(state.N, 1.0 / state.N)
        if state.regime == "rescaled":
            w /= state.alpha
        out = _pairs.euler_rk4(np.array(state.positions), w, dt, nsteps, sample_every)
        for s in range(1, len(out)):
            t = state.time + s * sample_every * dt
            if state.N > 1 and min_separation(out[s]) < thr:
                err = CollisionImminent(f"vortices within threshold at t={t:g}", time=t,
                                        min_separation=min_separation(out[s]))
                return Trajectory(np.array(times), np.array(samples), dt, False, err)
            times.append(t)
            samples.append(out[s])
            if on_sample is not None:
                on_sample(VortexEnsemble(out[s], state.alpha, state.regime, t))
        return Trajectory(np.array(times), np.array(samples), dt)

    cur = state
    for step in range(1, nsteps + 1):
        try:
            cur = step_rk4(cur, dt, table, depth, thr)
        except CollisionImminent as exc:
            return Trajectory(np.array(times), np.array(samples), dt, False, exc)
        cur = replace(cur, time=state.time + step * dt)
        if step % sample_every == 0:
            times.append(cur.time)
            samples.append(np.array(cur.positions))
            if on_sample is not None:
                on_sample(cur)
    return Trajectory(np.array(times), np.array(samples), dt)


def _euler_fast_path(state, table, depth) -> bool:
    return depth.is_constant and table.is_zero
