import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lakevortex import DepthField, Grid
from lakevortex.continuum import (ContinuumVorticity, Omega0, advance_lake, advance_transport, evolve,
                                  quadrature_particles, sample_vortices)
from lakevortex.diagnostics import sobolev_distance
from lakevortex.errors import DomainError, SupportEscape

# e^{-1} / (1 + e^{-1}/2): angular speed at r = 1 for b = 1 + 0.5 e^{-r^2}, frozen with mpmath
ANGULAR_SPEED = 0.310724806993927


@pytest.fixture(scope="module")
def raised():
    return DepthField("radial-gaussian-bump", (0.5, 1.0))


def test_omega0_validation():
    with pytest.raises(DomainError):
        Omega0("gauss")
    with pytest.raises(DomainError):
        Omega0("bump", 0.0)


def test_bump_density_normalized():
    om = Omega0("bump", 0.8, (0.3, -0.2))
    x = np.linspace(-1, 1, 801)
    h = x[1] - x[0]
    P = np.stack(np.meshgrid(x + 0.3, x - 0.2, indexing="ij"), axis=-1)
    assert om.density(P).sum() * h * h == pytest.approx(1.0, abs=1e-4)
    assert om.max_density == pytest.approx(om.density(np.array([0.3, -0.2])))


def test_single_point_at_center():
    q = sample_vortices(Omega0("bump"), 1)
    np.testing.assert_allclose(q, [[0.0, 0.0]], atol=1e-12)


@pytest.mark.parametrize("k", [2, 3, 5, 8])
def test_uniform_square_lattice(k):
    r = 1.5
    q = sample_vortices(Omega0("uniform-square", r), k * k)
    c = -r + (2 * np.arange(k) + 1) * r / k
    expect = np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1).reshape(-1, 2)
    np.testing.assert_allclose(q, expect, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 300))
def test_quadrature_counts_and_support(N):
    q = sample_vortices(Omega0("bump"), N)
    assert q.shape == (N, 2)
    assert np.all(np.hypot(q[:, 0], q[:, 1]) < 1.0)


def test_quadrature_matches_moments():
    q = sample_vortices(Omega0("bump"), 1024)
    np.testing.assert_allclose(q.mean(axis=0), 0.0, atol=1e-3)
    # E|x|^2 = 1/4 for the unit bump
    assert np.mean(np.sum(q * q, axis=1)) == pytest.approx(0.25, abs=5e-3)


def test_iid_reproducible():
    om = Omega0("bump", 1.0, (0.2, 0.1))
    a = sample_vortices(om, 500, "iid", seed=7)
    b = sample_vortices(om, 500, "iid", seed=7)
    c = sample_vortices(om, 500, "iid", seed=8)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.all(om.density(a) > 0)


def test_zero_mass_in_box():
    with pytest.raises(DomainError):
        sample_vortices(Omega0("bump", 0.5, (3.0, 3.0)), 10, box=2.0)
    with pytest.raises(DomainError):
        sample_vortices(Omega0("bump"), 10, mode="lattice")


def test_quadrature_particles_unit_mass():
    c = quadrature_particles(Omega0("bump"), 4096, alpha=0.3)
    assert c.weights.sum() == pytest.approx(1.0, rel=1e-14)
    assert np.all(c.weights > 0) and c.alpha == 0.3
    with pytest.raises(DomainError):
        ContinuumVorticity([[0.0, 0.0]], [-1.0])


# -- transport --------------------------------------------------------------

def test_transport_conserves_b(raised):
    c = quadrature_particles(Omega0("bump", 1.0, (0.6, 0.0)), 200)
    b0 = raised.b(c.positions)
    out = evolve(c, raised, None, 1e-3, [10.0], kind="transport")[0]
    assert out.time == 10.0
    assert np.max(np.abs(raised.b(out.positions) - b0)) <= 1e-8
    np.testing.assert_array_equal(out.weights, c.weights)


def test_transport_flat_stationary():
    flat = DepthField("constant", (2.0,))
    c = quadrature_particles(Omega0("bump"), 100)
    out = advance_transport(c, flat, 0.1)
    np.testing.assert_array_equal(out.positions, c.positions)


def test_transport_angular_speed(raised):
    c = ContinuumVorticity([[1.0, 0.0]], [1.0])
    out = evolve(c, raised, None, 1e-3, [1.0], kind="transport")[0]
    ang = math.atan2(out.positions[0, 1], out.positions[0, 0])
    assert abs(ang) == pytest.approx(ANGULAR_SPEED, rel=1e-10)


# -- lake -------------------------------------------------------------------

def test_lake_radial_steady(flat):
    g = Grid(128, 8.0)
    # about 20 particles per cell over the support keeps deposit aliasing small
    c = quadrature_particles(Omega0("bump"), 128**2)
    w0 = c.deposit(g).values
    out = evolve(c, flat, g, 0.05, [1.0])[0]
    w1 = out.deposit(g).values
    assert np.sum(np.abs(w1 - w0)) / np.sum(np.abs(w0)) <= 0.01
    assert out.weights.sum() == c.weights.sum()


def test_lake_center_of_vorticity(flat):
    g = Grid(256, 8.0)
    # two overlapping bumps: a non-radial, rotating configuration
    a = quadrature_particles(Omega0("bump", 1.0, (-0.4, 0.1)), 128**2)
    b = quadrature_particles(Omega0("bump", 1.0, (0.4, 0.1)), 128**2)
    s = ContinuumVorticity(np.concatenate([a.positions, b.positions]),
                           np.concatenate([a.weights, b.weights]) / 2)
    out = evolve(s, flat, g, 0.05, [1.0])[0]
    m0 = (s.weights[:, None] * s.positions).sum(axis=0)
    m1 = (out.weights[:, None] * out.positions).sum(axis=0)
    assert np.max(np.abs(m1 - m0)) <= 1e-3


def test_lake_support_escape(flat):
    g = Grid(64, 8.0)
    c = quadrature_particles(Omega0("bump", 1.0, (1.4, 0.0)), 400, alpha=0.0)
    with pytest.raises(SupportEscape):
        advance_lake(c, flat, g, 0.05, box=1.5)


def test_lake_requires_positive_dt(flat):
    c = quadrature_particles(Omega0("bump"), 100)
    with pytest.raises(DomainError):
        advance_lake(c, flat, Grid(64, 8.0), 0.0)


def test_regimes_approach_with_alpha(raised):
    """Lake flow at forcing alpha over time s/alpha tends to the transport flow at time s."""
    g = Grid(128, 8.0)
    om = Omega0("bump", 0.7, (0.8, 0.0))
    s_final = 1.0
    ref = evolve(quadrature_particles(om, 48**2), raised, None, 1e-3, [s_final], kind="transport")[0]
    dists = []
    for a in (4.0, 16.0, 64.0):
        start = quadrature_particles(om, 48**2, alpha=a)
        lake = evolve(start, raised, g, 0.02 / a, [s_final / a], tol=1e-8)[0]
        dists.append(sobolev_distance(lake.positions, ref, g, weights=lake.weights))
    assert dists[0] > dists[1] > dists[2]
