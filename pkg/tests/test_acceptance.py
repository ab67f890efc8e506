"""The twelve acceptance criteria, one PASS/FAIL line each.

Criteria 7, 9 (sup F_b clause) and 10 (F_b clause) are checked literally and
are expected to fail; see the decisions ledger for the measurements.
"""

import math
import time

import numpy as np
import pytest

from lakevortex import DepthField, Grid
from lakevortex import runner
from lakevortex.cli import _manufactured_rhs
from lakevortex.config import ExperimentConfig
from lakevortex.continuum import Omega0, quadrature_particles, sample_vortices
from lakevortex.diagnostics import (energy_derivative_defect, interaction_energy, m_b, modulated_energy,
                                    ring_average_identity, self_term_bruteforce)
from lakevortex.dynamics import VortexEnsemble, simulate
from lakevortex.elliptic import residual_lake, solve_lake_elliptic, velocity_from_stream
from lakevortex.grid import interpolate, sample

SWEEP_PHYSICAL = [64, 256, 1024]
SWEEP_RESCALED = [64, 256]


def config(**blocks):
    return ExperimentConfig.model_validate(blocks)


def decreasing(v):
    return all(a > b for a, b in zip(v, v[1:]))


# 1 ------------------------------------------------------------------------

def test_c1_euler_degeneracy(flat_table, flat, criterion):
    S = float(np.max(np.abs(flat_table.S)))
    q = [[-0.5, 0.0], [0.5, 0.0]]
    P = 4 * math.pi**2
    simulate(VortexEnsemble(q), flat_table, flat, 0.1, 1e-3)           # compile outside the timing
    t0 = time.perf_counter()
    tr = simulate(VortexEnsemble(q), flat_table, flat, 1.2 * P, 1e-3)
    wall = time.perf_counter() - t0
    ang = np.unwrap(np.arctan2(tr.positions[:, 1, 1], tr.positions[:, 1, 0]))
    ang -= ang[0]
    k = int(np.searchsorted(ang, 2 * math.pi))
    period = tr.times[k - 1] + (2 * math.pi - ang[k - 1]) * (tr.times[k] - tr.times[k - 1]) / (ang[k] - ang[k - 1])
    rel = abs(period / P - 1)
    ok = S <= 1e-8 and rel <= 1e-3 and wall < 1.0
    assert criterion(1, ok, f"max|S|={S:.1e}, period {period:.5f} (rel {rel:.1e}), {wall:.2f}s")


# 2 ------------------------------------------------------------------------

def test_c2_energy_without_forcing(bump_table, bump, criterion):
    q = sample_vortices(Omega0("bump"), 16)
    T = 1.0
    t0 = time.perf_counter()
    tr = simulate(VortexEnsemble(q, 0.0), bump_table, bump, T, 1e-3, sample_every=50)
    E = np.array([interaction_energy(p, bump_table, bump) for p in tr.positions])
    wall = time.perf_counter() - t0
    drift = float(np.max(np.abs(E - E[0])) / abs(E[0]) / T)
    ok = drift <= 1e-8 and wall < 10.0
    assert criterion(2, ok, f"relative E_N drift {drift:.1e} per unit time, {wall:.1f}s")


# 3 ------------------------------------------------------------------------

def test_c3_total_energy_discrimination(bump_table, criterion):
    cfg = config(grid={"n": 128}, sim={"N": 16, "T": 1.0, "alpha": 0.5, "dt": 1e-3, "sample_every": 50},
                 continuum={"enabled": False})
    s = runner.run_experiment(cfg, bump_table).summary
    d1, d2 = s["Etot1_drift"], s["Etot2_drift"]
    small, large = sorted((d1, d2))
    ok = small <= 1e-6 and large >= 100 * small and s["conserved_candidate"] is not None
    assert criterion(3, ok, f"drifts {d1:.2e} (coefficient 1), {d2:.2e} (coefficient 2); "
                            f"conserved candidate {s['conserved_candidate']}")


# 4 ------------------------------------------------------------------------

def test_c4_elliptic_order(bump, criterion):
    errs, res, hs = [], [], []
    for n in (128, 256):
        g = Grid(n, 8.0)
        exact = sample(g, lambda p: np.exp(-np.sum(p * p, axis=-1))).values
        omega = sample(g, lambda p: _manufactured_rhs(bump, p))
        psi = solve_lake_elliptic(bump, g, omega)
        errs.append(float(np.max(np.abs((psi.values - psi.values.mean()) - (exact - exact.mean())))))
        res.append(residual_lake(bump, psi, omega))
        hs.append(g.h)
    order = math.log2(errs[0] / errs[1])
    C = [r / h**2 for r, h in zip(res, hs)]
    ok = order >= 1.8 and C[1] <= 1.1 * C[0]
    assert criterion(4, ok, f"L_inf order {order:.2f}, residual/h^2 = {C[0]:.3f}, {C[1]:.3f}")


# 5 ------------------------------------------------------------------------

def test_c5_far_field(bump, criterion):
    L = 8.0
    g = Grid(256, L)
    c = np.array([0.25, 0.0])

    def bump_density(p):
        r2 = np.sum((p - c) ** 2, axis=-1)
        return np.where(r2 < 1.0, (1.0 - r2) ** 2, 0.0)
    omega = sample(g, bump_density)
    omega = omega * (1.0 / omega.integral())
    u = velocity_from_stream(bump, solve_lake_elliptic(bump, g, omega)).stacked()
    th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    d = []
    for r in (L / 3, 2 * L / 3):
        x = r * np.stack([np.cos(th), np.sin(th)], axis=-1)
        exact = np.stack([-x[:, 1], x[:, 0]], axis=-1) / (2 * np.pi * r * r)
        d.append(float(np.max(np.linalg.norm(interpolate(g, u, x) - exact, axis=-1))))
    ratio = d[1] / d[0]
    ok = 1 / 4.5 <= ratio <= 1 / 3.5
    assert criterion(5, ok, f"defect {d[0]:.2e} at R={L / 3:.3f}, {d[1]:.2e} at 2R, ratio {ratio:.4f}")


# 6 ------------------------------------------------------------------------

def test_c6_ring_identity(criterion):
    eta = 0.1
    errs = [abs(np.subtract(*ring_average_identity(np.array([r, 0.0]), np.zeros(2), eta, 256)))
            for r in (0.0, eta / 2, 2 * eta)]
    assert criterion(6, max(errs) <= 1e-10, f"max defect {max(errs):.1e}")


# 7 ------------------------------------------------------------------------

@pytest.mark.xfail(strict=True, reason="the ring mean of a smooth depth converges at second order in eta")
def test_c7_m_b_rate(bump, criterion):
    y = np.array([0.7, 0.2])
    etas = np.array([0.1, 0.05, 0.025])
    err = [abs(m_b(y, e, bump) - math.sqrt(bump.b(y))) for e in etas]
    slope = float(np.polyfit(np.log(etas), np.log(err), 1)[0])
    assert criterion(7, abs(slope - 1.0) <= 0.2, f"log-log slope {slope:.3f} (target 1.0 +- 0.2)")


# 8 ------------------------------------------------------------------------

def test_c8_modulated_energy_oracle(bump, grid256, bump_table256, criterion):
    om = Omega0("bump")
    c = quadrature_particles(om, 64**2)
    cell = float(np.min(np.diff(np.unique(c.positions[:, 0]))))
    me = modulated_energy(sample_vortices(om, 16), c, bump, grid256, bump_table256)
    brute = self_term_bruteforce(c, bump, bump_table256, cell)
    diff = abs(me.self_term - brute)
    h2 = grid256.h**2
    assert criterion(8, diff <= h2, f"psi route {me.self_term:.6f}, brute force {brute:.6f}, "
                                    f"difference {diff:.1e} (h^2 = {h2:.1e})")


# 9 ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def physical_sweep(bump_table256):
    cfg = config(sim={"T": 1.0, "alpha": 0.1})
    t0 = time.perf_counter()
    rows, _, _ = runner.run_sweep(cfg, bump_table256, SWEEP_PHYSICAL)
    return rows, time.perf_counter() - t0


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="F_b of the quadrature placements is negative and rises toward 0 with N")
def test_c9_sup_F_decreasing(physical_sweep, criterion):
    rows, _ = physical_sweep
    sup = [r["F_b_sup"] for r in rows]
    assert criterion("9 (sup F_b)", decreasing(sup),
                     "sup_t F_b = " + ", ".join(f"{v:.3e}" for v in sup) + f" for N = {SWEEP_PHYSICAL}")


@pytest.mark.slow
def test_c9_sobolev_decreasing(physical_sweep, criterion):
    rows, _ = physical_sweep
    H = [r["Hs_T"] for r in rows]
    assert criterion("9 (H^-2)", decreasing(H),
                     "H^-2(T) = " + ", ".join(f"{v:.3e}" for v in H) + f" for N = {SWEEP_PHYSICAL}")


@pytest.mark.slow
def test_c9_runtime(physical_sweep, criterion):
    rows, wall = physical_sweep
    ok = wall <= 15 * 60 and all(r["complete"] for r in rows)
    assert criterion("9 (runtime)", ok, f"sweep {wall:.0f}s")


# 10 -----------------------------------------------------------------------

def test_c10_level_set(bump_table, bump, criterion):
    q0 = np.array([[1.0, 0.0]])
    tr = simulate(VortexEnsemble(q0, math.log(2.0), "rescaled"), bump_table, bump, 10.0, 1e-2)
    drift = float(np.max(np.abs(bump.b(tr.positions.reshape(-1, 2)) - bump.b(q0)[0])))
    assert criterion("10 (level set)", drift <= 1e-6, f"max |b(q(t)) - b(q0)| = {drift:.1e} over [0, 10]")


@pytest.fixture(scope="module")
def rescaled_sweep(bump_table256):
    cfg = config(sim={"T": 1.0, "regime": "rescaled"})
    rows, _, _ = runner.run_sweep(cfg, bump_table256, SWEEP_RESCALED)
    return rows


@pytest.mark.xfail(strict=True, reason="the rescaled F_b is negative and rises toward 0 with N")
def test_c10_F_decreasing(rescaled_sweep, criterion):
    F = [r["F_b_T"] for r in rescaled_sweep]
    assert criterion("10 (F_b)", decreasing(F),
                     "F_b(1) = " + ", ".join(f"{v:.3e}" for v in F) + f" for N = {SWEEP_RESCALED}")


def test_c10_sobolev(rescaled_sweep, criterion):
    H = [r["Hs_T"] for r in rescaled_sweep]
    assert criterion("10 (H^-2)", H[1] <= H[0],
                     "H^-2(1) = " + ", ".join(f"{v:.3e}" for v in H) + f" for N = {SWEEP_RESCALED}")


# 11 -----------------------------------------------------------------------

def test_c11_energy_derivative(bump_table, bump, criterion):
    q = sample_vortices(Omega0("bump"), 16)
    d = [energy_derivative_defect(simulate(VortexEnsemble(q, 0.5), bump_table, bump, 1.0, dt), bump_table, bump, 0.5)
         for dt in (1e-2, 5e-3)]
    ratio = d[0] / d[1]
    assert criterion(11, 3.5 <= ratio <= 4.5, f"defects {d[0]:.2e}, {d[1]:.2e}, ratio {ratio:.2f}")


# 12 -----------------------------------------------------------------------

def test_c12_determinism(bump_table, criterion):
    cfg = config(grid={"n": 128}, sim={"N": 32, "T": 0.2, "alpha": 0.5, "sampling": "iid", "seed": 11},
                 continuum={"M": 4096})
    a = runner.run_experiment(cfg, bump_table).record.to_csv()
    b = runner.run_experiment(cfg, bump_table).record.to_csv()
    assert criterion(12, a == b, f"two runs, {len(a)} bytes each, identical: {a == b}")
