"""Stream-function solver for ``-div((1/b) grad psi) = omega`` on a truncated plane.

The free-space Laplacian is inverted by zero-padded FFT convolution against
the sampled log kernel; the variable-depth problem is solved by Picard
iteration on ``-lap psi = b*omega + b*grad(1/b).grad psi``.
"""

from __future__ import annotations

import math
import warnings
from functools import lru_cache

import numpy as np
from scipy import integrate

from .depth import DepthField
from .errors import NonConvergence
from .grid import Grid, ScalarGrid, VectorGrid, centered_gradient, same_geometry

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 200


@lru_cache(maxsize=None)
def mean_log_unit_square() -> float:
    """Mean of ``ln|x|`` over the unit square centred at the origin.

    By symmetry this is eight times the integral over the triangle
    ``0 <= theta <= pi/4``; the radial integral is done in closed form and the
    angular one by adaptive Gauss-Kronrod quadrature.
    """
    def radial(theta):
        r = 0.5 / math.cos(theta)
        return 0.5 * r * r * (math.log(r) - 0.5)

    val, _ = integrate.quad(radial, 0.0, math.pi / 4, epsabs=1e-14, epsrel=1e-13)
    return 8.0 * val


def log_cell_average(h: float) -> float:
    """Average of ``-ln|x|/(2 pi)`` over the square of side ``h`` centred at 0."""
    return -(math.log(h) + mean_log_unit_square()) / (2.0 * math.pi)


def log_kernel(x) -> np.ndarray:
    """``g(x) = -ln|x| / (2 pi)``."""
    x = np.asarray(x, dtype=float)
    return -np.log(np.hypot(x[..., 0], x[..., 1])) / (2.0 * np.pi)


@lru_cache(maxsize=8)
def _kernel_hat(geometry: Grid) -> np.ndarray:
    n, h = geometry.n, geometry.h
    k = np.arange(2 * n)
    off = np.where(k < n, k, k - 2 * n) * h
    r = np.hypot(off[:, None], off[None, :])
    r[0, 0] = 1.0
    G = -np.log(r) / (2.0 * np.pi)
    G[0, 0] = log_cell_average(h)
    out = np.fft.rfft2(G)
    out.setflags(write=False)
    return out


def _convolve(geometry: Grid, f: np.ndarray) -> np.ndarray:
    n = geometry.n
    fh = np.fft.rfft2(f, s=(2 * n, 2 * n))
    return np.fft.irfft2(fh * _kernel_hat(geometry), s=(2 * n, 2 * n))[:n, :n] * geometry.h**2


def poisson_free_space(geometry: Grid, f: ScalarGrid, check_boundary: bool = True) -> ScalarGrid:
    """Free-space solution ``g * f`` of ``-lap psi = f`` on the grid window."""
    same_geometry(f, ScalarGrid(geometry, np.zeros((geometry.n, geometry.n))))
    v = f.values
    if check_boundary:
        fmax = np.max(np.abs(v))
        ring = max(np.abs(v[0]).max(), np.abs(v[-1]).max(), np.abs(v[:, 0]).max(), np.abs(v[:, -1]).max())
        if fmax > 0 and ring > 1e-6 * fmax:
            warnings.warn(f"source does not decay at the grid boundary (ring/max = {ring / fmax:.2e}); "
                          "the truncated domain may be too small", RuntimeWarning, stacklevel=2)
    return ScalarGrid(geometry, _convolve(geometry, v))


def _depth_on_grid(depth: DepthField, geometry: Grid):
    pts = geometry.points
    b = depth.b(pts)
    coef = -depth.grad(pts) / b[..., None]      # b * grad(1/b)
    return b, coef


def solve_lake_elliptic(depth: DepthField, geometry: Grid, omega: ScalarGrid,
                        tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                        theta: float = 1.0, psi0: ScalarGrid | None = None,
                        full_output: bool = False):
    """Solve ``-div((1/b) grad psi) = omega`` by Picard iteration.

    Each sweep solves ``-lap psi_new = b*omega + b*grad(1/b).grad_h psi`` with
    the free-space convolution and relaxes by ``theta``.  Stops when the
    relative sup-norm increment is at most ``tol``.  The returned stream
    function has zero grid mean.  With ``full_output`` also returns the number
    of sweeps performed.
    """
    same_geometry(omega, ScalarGrid(geometry, np.zeros((geometry.n, geometry.n))))
    if not tol > 0:
        raise ValueError("tol must be positive")
    b, coef = _depth_on_grid(depth, geometry)
    h = geometry.h
    base = b * omega.values
    psi = _convolve(geometry, base) if psi0 is None else np.array(psi0.values, dtype=float)
    iterations = 0
    if not depth.is_constant:
        converged = False
        for iterations in range(1, max_iter + 1):
            gx, gy = centered_gradient(psi, h)
            new = _convolve(geometry, base + coef[..., 0] * gx + coef[..., 1] * gy)
            if theta != 1.0:
                new = (1.0 - theta) * psi + theta * new
            scale = np.max(np.abs(psi))
            delta = np.max(np.abs(new - psi))
            psi = new
            if delta == 0.0 or (scale > 0 and delta <= tol * scale):
                converged = True
                break
        if not converged:
            raise NonConvergence(
                f"Picard iteration did not reach tol={tol:g} in {max_iter} sweeps "
                f"(last relative increment {delta / max(scale, 1e-300):.3e}); "
                "try under-relaxation theta < 1", iterations=max_iter)
    else:
        iterations = 1
    psi = psi - psi.mean()
    out = ScalarGrid(geometry, psi)
    return (out, iterations) if full_output else out


def residual_lake(depth: DepthField, psi: ScalarGrid, omega: ScalarGrid) -> float:
    """Sup norm over the interior of ``-div_h((1/b) grad_h psi) - omega``.

    Flux form with ``1/b`` evaluated exactly at cell-face midpoints; the
    boundary ring is excluded.
    """
    geometry = same_geometry(psi, omega)
    x, h = geometry.nodes, geometry.h
    p = psi.values
    xm = x[:-1] + 0.5 * h
    Xf, Yf = np.meshgrid(xm, x, indexing="ij")
    beta_x = 1.0 / depth.b(np.stack([Xf, Yf], axis=-1))        # faces (i+1/2, j)
    beta_y = 1.0 / depth.b(np.stack([Yf.T, Xf.T], axis=-1))    # faces (i, j+1/2)
    fx = beta_x * (p[1:, :] - p[:-1, :])
    fy = beta_y * (p[:, 1:] - p[:, :-1])
    div = np.zeros_like(p)
    div[1:-1, :] += fx[1:, :] - fx[:-1, :]
    div[:, 1:-1] += fy[:, 1:] - fy[:, :-1]
    r = -div / h**2 - omega.values
    return float(np.max(np.abs(r[1:-1, 1:-1])))


def velocity_from_stream(depth: DepthField, psi: ScalarGrid) -> VectorGrid:
    """``u = -(1/b) perp(grad_h psi)`` with centered differences."""
    geometry = psi.geometry
    gx, gy = centered_gradient(psi.values, geometry.h)
    inv_b = 1.0 / depth.b(geometry.points)
    return VectorGrid(ScalarGrid(geometry, inv_b * gy), ScalarGrid(geometry, -inv_b * gx))


def divergence(field: VectorGrid, weight: np.ndarray | None = None) -> ScalarGrid:
    """Centered ``div_h(weight * u)``."""
    geometry = field.geometry
    u1, u2 = field.u1.values, field.u2.values
    if weight is not None:
        u1, u2 = weight * u1, weight * u2
    d1 = np.gradient(u1, geometry.h, axis=0, edge_order=2)
    d2 = np.gradient(u2, geometry.h, axis=1, edge_order=2)
    return ScalarGrid(geometry, d1 + d2)
