import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lakevortex.diagnostics import interaction_energy
from lakevortex.dynamics import (VortexEnsemble, alpha_from_epsilon, default_dt, min_separation, pv_rhs,
                                 simulate, step_rk4)
from lakevortex.errors import CollisionImminent, DomainError

# ln 2 / (40 pi), frozen with mpmath
ALPHA_HALF_TEN = 0.00551589000381629


def ring(N, r=1.0):
    th = 2 * np.pi * np.arange(N) / N
    return r * np.stack([np.cos(th), np.sin(th)], axis=-1)


def test_alpha_examples():
    assert alpha_from_epsilon(math.exp(-4 * math.pi), 1) == pytest.approx(1.0, rel=1e-14)
    assert alpha_from_epsilon(math.exp(-8 * math.pi), 2) == pytest.approx(1.0, rel=1e-14)
    assert alpha_from_epsilon(0.5, 10) == pytest.approx(ALPHA_HALF_TEN, rel=1e-14)
    for bad in (0.0, 1.0, -0.2, 2.0):
        with pytest.raises(DomainError):
            alpha_from_epsilon(bad, 3)


def test_ensemble_validation():
    with pytest.raises(DomainError):
        VortexEnsemble([[0.0, np.nan]])
    with pytest.raises(DomainError):
        VortexEnsemble([[0.0, 0.0]], regime="rescaled")
    with pytest.raises(DomainError):
        VortexEnsemble([[0.0, 0.0]], alpha=-1.0)
    s = VortexEnsemble([[1.0, 2.0]])
    with pytest.raises(ValueError):
        s.positions[0, 0] = 3.0


def test_single_vortex_drift_only(bump_table, bump):
    q = np.array([[0.7, -0.4]])
    v = pv_rhs(VortexEnsemble(q, 0.3), bump_table, bump)
    np.testing.assert_array_equal(v, 0.3 * bump.drift(q))
    v = pv_rhs(VortexEnsemble(q, 0.3, "rescaled"), bump_table, bump)
    np.testing.assert_array_equal(v, bump.drift(q))


def test_two_vortex_speed(flat_table, flat):
    v = pv_rhs(VortexEnsemble([[-0.5, 0.0], [0.5, 0.0]]), flat_table, flat)
    np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1 / (4 * math.pi), rtol=1e-14)
    assert v[0, 1] == pytest.approx(-v[1, 1])
    assert v[0, 1] < 0 < v[1, 1]


def test_rescaled_divides_interaction(bump_table, bump, rng):
    q = rng.uniform(-1, 1, size=(5, 2))
    a = 2.5
    phys = pv_rhs(VortexEnsemble(q, 0.0), bump_table, bump)
    resc = pv_rhs(VortexEnsemble(q, a, "rescaled"), bump_table, bump)
    np.testing.assert_allclose(resc, bump.drift(q) + phys / a, atol=1e-15)


def test_collision_threshold(bump_table, bump):
    q = np.array([[0.0, 0.0], [1e-11, 0.0]])
    with pytest.raises(CollisionImminent):
        pv_rhs(VortexEnsemble(q), bump_table, bump)


def test_single_euler_vortex_stationary(flat_table, flat):
    s = VortexEnsemble([[0.3, 0.2]], alpha=1.0)
    out = step_rk4(s, 0.1, flat_table, flat)
    np.testing.assert_array_equal(out.positions, s.positions)
    assert out.time == pytest.approx(0.1)


def _integrate(q, dt, T, table, depth, alpha):
    s = VortexEnsemble(q, alpha)
    for _ in range(int(round(T / dt))):
        s = step_rk4(s, dt, table, depth)
    return s.positions


def test_rk4_order(bump_table, bump):
    q = np.array([[-0.5, 0.1], [0.6, 0.0], [0.1, 0.7]])
    T = 0.8
    ref = _integrate(q, 1e-3, T, bump_table, bump, 0.5)
    errs = [np.max(np.abs(_integrate(q, dt, T, bump_table, bump, 0.5) - ref)) for dt in (0.2, 0.1)]
    assert 12.0 <= errs[0] / errs[1] <= 20.0


def test_time_reversal(bump_table, bump, rng):
    q = rng.uniform(-1.5, 1.5, size=(6, 2))
    s = VortexEnsemble(q, 0.4)
    back = step_rk4(step_rk4(s, 1e-3, bump_table, bump), -1e-3, bump_table, bump)
    np.testing.assert_allclose(back.positions, q, rtol=0, atol=1e-12)
    assert back.time == pytest.approx(0.0, abs=1e-18)
    with pytest.raises(DomainError):
        step_rk4(s, 0.0, bump_table, bump)


def test_simulate_T0(bump_table, bump):
    tr = simulate(VortexEnsemble([[0.1, 0.0], [0.4, 0.2]]), bump_table, bump, 0.0, 1e-2)
    assert tr.complete and len(tr.times) == 1


def test_euler_two_vortex_period(flat_table, flat):
    P = 4 * math.pi**2
    tr = simulate(VortexEnsemble([[-0.5, 0.0], [0.5, 0.0]]), flat_table, flat, P, 1e-3)
    np.testing.assert_allclose(tr.positions[-1], tr.positions[0], atol=1e-3 * 2 * math.pi)
    # half a period in, the pair has swapped places
    k = len(tr.times) // 2
    np.testing.assert_allclose(tr.positions[k], -tr.positions[0], atol=1e-6)


def test_rescaled_level_set_conservation(bump_table, bump):
    q0 = np.array([[1.0, 0.0]])
    b0 = bump.b(q0)[0]
    tr = simulate(VortexEnsemble(q0, 3.0, "rescaled"), bump_table, bump, 10.0, 1e-2)
    assert np.max(np.abs(bump.b(tr.positions.reshape(-1, 2)) - b0)) <= 1e-6


def test_min_separation():
    assert min_separation(VortexEnsemble([[-0.5, 0.0], [0.5, 0.0]])) == 1.0
    assert min_separation(ring(4)) == pytest.approx(math.sqrt(2), rel=1e-15)
    with pytest.raises(DomainError):
        min_separation(VortexEnsemble([[0.0, 0.0]]))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**31))
def test_min_separation_bruteforce(N, seed):
    q = np.random.default_rng(seed).normal(size=(N, 2))
    d = min(np.linalg.norm(q[i] - q[j]) for i in range(N) for j in range(i + 1, N))
    assert min_separation(q) == pytest.approx(d, rel=1e-15)


def test_default_dt():
    assert default_dt([[0.0, 0.0]]) == 1e-2
    assert default_dt([[0.0, 0.0], [0.1, 0.0]]) == pytest.approx(0.1 * 0.01 * 2 * math.pi)


def test_energy_conserved_without_forcing(bump_table, bump, rng):
    q = rng.uniform(-1.2, 1.2, size=(16, 2))
    dt = default_dt(q)
    tr = simulate(VortexEnsemble(q, 0.0), bump_table, bump, 1.0, min(dt, 1e-3), sample_every=50)
    E = np.array([interaction_energy(p, bump_table, bump) for p in tr.positions])
    assert np.max(np.abs(E - E[0])) / abs(E[0]) <= 1e-8


def test_center_of_vorticity_fixed_flat(flat_table, flat, rng):
    q = rng.uniform(-1.2, 1.2, size=(16, 2))
    tr = simulate(VortexEnsemble(q, 0.7), flat_table, flat, 1.0, min(default_dt(q), 1e-3), sample_every=100)
    c = tr.positions.mean(axis=1)
    assert np.max(np.abs(c - c[0])) <= 1e-9
    E = np.array([interaction_energy(p, flat_table, flat) for p in tr.positions])
    assert np.max(np.abs(E - E[0])) <= 1e-9 * abs(E[0]) + 1e-15


def test_collision_returns_partial(flat_table, flat):
    # a threshold above the initial spacing stops the run at the first sample
    tr = simulate(VortexEnsemble([[-0.5, 0.0], [0.5, 0.0]]), flat_table, flat, 1.0, 1e-2, threshold=2.0)
    assert not tr.complete and isinstance(tr.error, CollisionImminent)
    assert len(tr.times) == 1
