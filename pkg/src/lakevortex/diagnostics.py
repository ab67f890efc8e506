"""Scalar diagnostics of vortex ensembles and their continuum counterparts."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import _pairs
from .continuum import ContinuumVorticity
from .depth import DepthField, perp
from .elliptic import log_cell_average, solve_lake_elliptic
from .errors import DiagonalSingularity, DomainError
from .grid import Grid, ScalarGrid, centered_gradient, deposit, interpolate
from .kernel import KernelTable, diagonal, field_sums, potential_sum, smooth_sums

CSV_COLUMNS = ("t", "E_N", "I_N", "Etot1", "Etot2", "F_b", "Hs", "min_sep", "close_pairs",
               "level_set_drift")


# -- energies ---------------------------------------------------------------

def interaction_energy(Q, table: KernelTable, depth: DepthField) -> float:
    """``(1/N^2) sum_{i != j} g_b(q_i, q_j)``."""
    q = np.ascontiguousarray(np.asarray(Q, dtype=float).reshape(-1, 2))
    N = len(q)
    if N < 2:
        return 0.0
    sb = np.sqrt(depth.b(q))
    sing, min_r2 = _pairs.singular_energy(np.ascontiguousarray(q[:, 0]), np.ascontiguousarray(q[:, 1]), sb)
    if min_r2 < 1e-28:
        raise DiagonalSingularity("coincident vortices in the interaction energy")
    smooth = 0.0
    if not table.is_zero:
        pot, _ = smooth_sums(table, q, q, np.ones(N), gradient=False)
        smooth = float(pot.sum() - diagonal(table, q)[0].sum())
    return (sing + smooth) / N**2


def moment_inertia(Q) -> float:
    q = np.asarray(Q, dtype=float).reshape(-1, 2)
    if len(q) == 0:
        return 0.0
    return float(np.mean(np.sum(q * q, axis=1)))


def total_energy_candidates(Q, table: KernelTable, depth: DepthField, alpha: float, E=None):
    """``(E_N + (alpha/N) sum b(q_i), E_N + (2 alpha/N) sum b(q_i))``."""
    q = np.asarray(Q, dtype=float).reshape(-1, 2)
    E = interaction_energy(q, table, depth) if E is None else E
    mb = float(np.mean(depth.b(q)))
    return E + alpha * mb, E + 2.0 * alpha * mb


def energy_rate(Q, table: KernelTable, depth: DepthField, alpha: float) -> float:
    """Closed-form ``dE_N/dt`` for the physical regime:
    ``-(2 alpha/N^2) sum_i (perp(grad b)/b)(q_i) . sum_{j != i} grad_x g_b(q_i, q_j)``.

    The depth-gradient piece of ``grad_x g_b`` is parallel to ``grad b(q_i)``
    and drops out of the dot product.
    """
    q = np.asarray(Q, dtype=float).reshape(-1, 2)
    N = len(q)
    if N < 2 or alpha == 0.0:
        return 0.0
    _, grad, _ = field_sums(table, depth, q, q, np.ones(N), np.arange(N), potential=False)
    v = perp(depth.grad(q)) / depth.b(q)[:, None]
    return float(-2.0 * alpha / N**2 * np.sum(v * grad))


def energy_derivative_defect(trajectory, table: KernelTable, depth: DepthField, alpha: float,
                             rate_scale: float = 1.0) -> float:
    """Max over interior samples of |centered dE_N/dt - closed form|.

    ``trajectory`` needs ``times`` and ``positions``; ``rate_scale`` is 1 in the
    physical regime and ``1/alpha`` in the rescaled one.
    """
    t = np.asarray(trajectory.times, dtype=float)
    P = trajectory.positions
    if len(t) < 3:
        raise DomainError("need at least three samples")
    dts = np.diff(t)
    if not np.allclose(dts, dts[0], rtol=1e-9, atol=0):
        raise DomainError("samples must be uniformly spaced")
    E = np.array([interaction_energy(p, table, depth) for p in P])
    fd = (E[2:] - E[:-2]) / (t[2:] - t[:-2])
    closed = np.array([rate_scale * energy_rate(p, table, depth, alpha) for p in P[1:-1]])
    return float(np.max(np.abs(fd - closed)))


# -- regularized kernels ----------------------------------------------------

def g_eta(x, eta: float):
    """Log kernel truncated at radius ``eta``."""
    if not 0.0 < eta < 1.0:
        raise DomainError("eta must lie in (0, 1)")
    x = np.asarray(x, dtype=float)
    r = np.hypot(x[..., 0], x[..., 1])
    out = -np.log(np.maximum(r, eta)) / (2.0 * np.pi)
    return out[()] if out.ndim == 0 else out


def _ring(y, eta, M):
    th = 2.0 * np.pi * np.arange(M) / M
    return np.asarray(y, dtype=float) + eta * np.stack([np.cos(th), np.sin(th)], axis=-1)


def m_b(y, eta: float, depth: DepthField, M: int = 64) -> float:
    """Inverse of the average of ``1/sqrt(b)`` over the circle of radius ``eta`` about ``y``."""
    if M < 8:
        raise DomainError("need at least 8 ring nodes")
    return float(1.0 / np.mean(1.0 / np.sqrt(depth.b(_ring(y, eta, M)))))


def ring_average_identity(x, y, eta: float, M: int = 256):
    """Trapezoid average of ``g(x - z)`` over ``|z - y| = eta`` and ``g_eta(x - y)``."""
    z = _ring(y, eta, M)
    d = np.asarray(x, dtype=float) - z
    quad = float(np.mean(-np.log(np.hypot(d[:, 0], d[:, 1])) / (2.0 * np.pi)))
    return quad, float(g_eta(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), eta))


# -- modulated energy -------------------------------------------------------

def default_probe(table: KernelTable) -> np.ndarray:
    """A point near the corner of the kernel box, far from a centred support."""
    return np.array([-0.875 * table.R, -0.875 * table.R])


def stream_of(omega: ContinuumVorticity, depth: DepthField, geometry: Grid, table: KernelTable,
              psi: ScalarGrid | None = None, probe=None):
    """``G_b[omega]`` on the grid with the kernel route's additive constant.

    The grid solve fixes the stream function up to a constant; the constant is
    chosen so that the value at ``probe`` equals ``sum_k w_k g_b(probe, x_k)``.
    Returns ``(psi_values, omega_grid)``.
    """
    w_grid = omega.deposit(geometry)
    if psi is None:
        psi = solve_lake_elliptic(depth, geometry, w_grid)
    probe = default_probe(table) if probe is None else np.asarray(probe, dtype=float)
    ref = potential_sum(table, depth, probe[None], omega.positions, omega.weights)[0]
    shift = ref - interpolate(geometry, psi.values, probe[None])[0]
    return psi.values + shift, w_grid


@dataclass
class ModulatedEnergy:
    total: float
    self_term: float          # int psi d omega
    cross_term: float         # (2/N) sum psi(q_i)
    E_N: float


def modulated_energy(Q, omega: ContinuumVorticity, depth: DepthField, geometry: Grid,
                     table: KernelTable, psi: ScalarGrid | None = None, E_N=None,
                     stream=None) -> ModulatedEnergy:
    """``int psi d omega - (2/N) sum_i psi(q_i) + E_N`` with ``psi = G_b[omega]``.

    ``stream`` may pass a precomputed ``stream_of`` result.
    """
    q = np.asarray(Q, dtype=float).reshape(-1, 2)
    N = len(q)
    if N == 0:
        raise DomainError("empty vortex set")
    psi_v, w_grid = stream_of(omega, depth, geometry, table, psi) if stream is None else stream
    self_term = float(np.sum(psi_v * w_grid.values) * geometry.h**2)
    cross = float(2.0 / N * np.sum(interpolate(geometry, psi_v, q)))
    E = interaction_energy(q, table, depth) if E_N is None else E_N
    return ModulatedEnergy(self_term - cross + E, self_term, cross, E)


def self_term_bruteforce(omega: ContinuumVorticity, depth: DepthField, table: KernelTable,
                         cell: float) -> float:
    """``sum_k sum_l w_k w_l g_b(x_k, x_l)`` with the diagonal log replaced by
    its average over a particle cell of side ``cell``."""
    x = np.ascontiguousarray(omega.positions)
    w = omega.weights
    b = depth.b(x)
    wsb = w * np.sqrt(b)
    P, _, _, _ = _pairs.singular_field(x[:, 0].copy(), x[:, 1].copy(), x[:, 0].copy(), x[:, 1].copy(),
                                       wsb, np.arange(len(x)), False)
    sing = float(np.sum(wsb * P)) + float(np.sum(w * w * b)) * log_cell_average(cell)
    smooth = 0.0
    if not table.is_zero:
        pot, _ = smooth_sums(table, x, x, w, gradient=False)
        smooth = float(np.sum(w * pot))
    return sing + smooth


# -- distances and counts ---------------------------------------------------

def _dft_matrix(freq, coords):
    return np.exp(-1j * np.outer(freq, coords))


def sobolev_distance(Q, omega, geometry: Grid, s: float = -2.0, cutoff: float | None = None,
                     weights=None) -> float:
    """Weighted ``H^s`` distance between the empirical measure of ``Q`` and ``omega``.

    ``weights`` replaces the uniform ``1/N`` masses of the points.

    ``omega`` is a ContinuumVorticity (deposited on ``geometry``) or a
    ScalarGrid density.  Fourier transforms are evaluated on the frequency
    lattice ``pi k / L`` with ``|xi_j| <= cutoff`` per axis.
    """
    if s >= -1:
        raise DomainError("s must be < -1")
    h = geometry.h
    cutoff = math.pi / h if cutoff is None else cutoff
    if cutoff > math.pi / h * (1 + 1e-12):
        raise DomainError("cutoff exceeds the grid Nyquist frequency")
    dxi = math.pi / geometry.L
    kmax = int(math.floor(cutoff / dxi + 1e-9))
    xi = dxi * np.arange(-kmax, kmax + 1)
    q = np.asarray(Q, dtype=float).reshape(-1, 2)
    w_grid = omega.deposit(geometry) if isinstance(omega, ContinuumVorticity) else omega
    x = geometry.nodes
    A = _dft_matrix(xi, x)
    grid_hat = A @ w_grid.values @ A.T * h * h
    w = np.full(len(q), 1.0 / len(q)) if weights is None else np.asarray(weights, dtype=float).ravel()
    emp_hat = (_dft_matrix(xi, q[:, 0]) * w) @ _dft_matrix(xi, q[:, 1]).T
    mu = emp_hat - grid_hat
    X1, X2 = np.meshgrid(xi, xi, indexing="ij")
    mask = X1**2 + X2**2 <= cutoff**2
    wgt = (1.0 + X1**2 + X2**2) ** s
    return float(math.sqrt(np.sum((wgt * np.abs(mu) ** 2)[mask]) * dxi * dxi))


def count_close_pairs(Q, eps: float) -> int:
    """Number of ordered pairs ``i != j`` with ``|q_i - q_j| <= eps``."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    q = np.asarray(Q, dtype=float).reshape(-1, 2)
    if len(q) < 2:
        return 0
    return 2 * len(cKDTree(q).query_pairs(eps, output_type="ndarray"))


# -- regularized difference and its energy -------------------------------------

def regularized_difference(Q, omega: ContinuumVorticity, depth: DepthField, geometry: Grid,
                           eta: float, ring_nodes: int = 64) -> ScalarGrid:
    """Grid density of ``(1/N) sum_i delta~_{q_i}^eta - omega``.

    Each vortex becomes ``ring_nodes`` points on the circle of radius ``eta``
    with weights ``m_b(q_i, eta) / (sqrt(b(z)) ring_nodes)``.
    """
    q = np.asarray(Q, dtype=float).reshape(-1, 2)
    N = len(q)
    th = 2.0 * np.pi * np.arange(ring_nodes) / ring_nodes
    ring = eta * np.stack([np.cos(th), np.sin(th)], axis=-1)
    Z = (q[:, None, :] + ring[None]).reshape(-1, 2)
    inv_sb = 1.0 / np.sqrt(depth.b(Z)).reshape(N, ring_nodes)
    mb = 1.0 / inv_sb.mean(axis=1)
    wz = (mb[:, None] * inv_sb / ring_nodes / N).ravel()
    return deposit(geometry, Z, wz) - omega.deposit(geometry)


def dirichlet_energy(depth: DepthField, geometry: Grid, density: ScalarGrid) -> float:
    """``int (1/b) |grad H|^2`` with ``H`` the lake stream function of ``density``."""
    H = solve_lake_elliptic(depth, geometry, density)
    g1, g2 = centered_gradient(H.values, geometry.h)
    return float(np.sum((g1**2 + g2**2) / depth.b(geometry.points)) * geometry.h**2)


# -- records ----------------------------------------------------------------

@dataclass
class DiagnosticsRecord:
    meta: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)

    def append(self, **values):
        row = {k: values.get(k, float("nan")) for k in CSV_COLUMNS}
        if self.rows and not row["t"] > self.rows[-1]["t"]:
            raise DomainError("sample times must be strictly increasing")
        self.rows.append(row)

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[k]) for k in CSV_COLUMNS])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % v
