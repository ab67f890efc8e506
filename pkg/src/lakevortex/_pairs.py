"""Direct O(targets x sources) sums of the singular part of the lake kernel.

The singular part is ``sqrt(b(x) b(y)) g(x - y)`` with ``g = -ln|.|/(2 pi)``.
Loops run in a fixed order so results are bit-reproducible.
"""

import math

import numpy as np
from numba import njit

INV_2PI = 1.0 / (2.0 * math.pi)


@njit(cache=True)
def singular_field(tx, ty, sx, sy, wsb, self_index, skip_coincident):
    """Per target ``i``: ``P_i = sum_j wsb_j g(t_i - s_j)`` and
    ``D_i = sum_j wsb_j grad g(t_i - s_j)``.

    ``self_index[i] >= 0`` excludes that source from target ``i``;
    ``skip_coincident`` also excludes sources sitting exactly on the target.
    Returns ``P, D1, D2, min_r2`` where ``min_r2`` is the smallest squared
    distance over the pairs actually summed.
    """
    nt = tx.shape[0]
    ns = sx.shape[0]
    P = np.zeros(nt)
    D1 = np.zeros(nt)
    D2 = np.zeros(nt)
    min_r2 = np.inf
    for i in range(nt):
        xi = tx[i]
        yi = ty[i]
        skip = self_index[i]
        p = 0.0
        d1 = 0.0
        d2 = 0.0
        for j in range(ns):
            if j == skip:
                continue
            dx = xi - sx[j]
            dy = yi - sy[j]
            r2 = dx * dx + dy * dy
            if r2 == 0.0 and skip_coincident:
                continue
            if r2 < min_r2:
                min_r2 = r2
            if r2 == 0.0:
                continue
            c = wsb[j]
            p -= c * 0.5 * math.log(r2)
            q = c / r2
            d1 -= q * dx
            d2 -= q * dy
        P[i] = p * INV_2PI
        D1[i] = d1 * INV_2PI
        D2[i] = d2 * INV_2PI
    return P, D1, D2, min_r2


@njit(cache=True)
def singular_energy(x, y, sb):
    """``sum_{i != j} sb_i sb_j g(q_i - q_j)`` over ordered pairs, and min r^2."""
    n = x.shape[0]
    total = 0.0
    min_r2 = np.inf
    for i in range(n):
        acc = 0.0
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            r2 = dx * dx + dy * dy
            if r2 < min_r2:
                min_r2 = r2
            acc -= sb[j] * 0.5 * math.log(r2)
        total += sb[i] * acc
    return 2.0 * total * INV_2PI, min_r2


@njit(cache=True)
def min_pair_distance(x, y):
    n = x.shape[0]
    best = np.inf
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            r2 = dx * dx + dy * dy
            if r2 < best:
                best = r2
    return math.sqrt(best)


@njit(cache=True)
def euler_rk4(q, weights, dt, nsteps, sample_every):
    """RK4 for constant-depth (planar Euler) point vortices.

    ``q`` has shape (N, 2); returns positions at every ``sample_every`` steps
    including the initial state.
    """
    n = q.shape[0]
    nsamp = nsteps // sample_every + 1
    out = np.empty((nsamp, n, 2))
    out[0] = q
    cur = q.copy()
    k1 = np.empty((n, 2))
    k2 = np.empty((n, 2))
    k3 = np.empty((n, 2))
    k4 = np.empty((n, 2))
    tmp = np.empty((n, 2))
    s = 1
    for step in range(1, nsteps + 1):
        _euler_velocity(cur, weights, k1)
        for i in range(n):
            tmp[i, 0] = cur[i, 0] + 0.5 * dt * k1[i, 0]
            tmp[i, 1] = cur[i, 1] + 0.5 * dt * k1[i, 1]
        _euler_velocity(tmp, weights, k2)
        for i in range(n):
            tmp[i, 0] = cur[i, 0] + 0.5 * dt * k2[i, 0]
            tmp[i, 1] = cur[i, 1] + 0.5 * dt * k2[i, 1]
        _euler_velocity(tmp, weights, k3)
        for i in range(n):
            tmp[i, 0] = cur[i, 0] + dt * k3[i, 0]
            tmp[i, 1] = cur[i, 1] + dt * k3[i, 1]
        _euler_velocity(tmp, weights, k4)
        for i in range(n):
            for c in range(2):
                cur[i, c] += dt / 6.0 * (k1[i, c] + 2.0 * k2[i, c] + 2.0 * k3[i, c] + k4[i, c])
        if step % sample_every == 0:
            out[s] = cur
            s += 1
    return out


@njit(cache=True)
def _euler_velocity(q, weights, out):
    n = q.shape[0]
    for i in range(n):
        u = 0.0
        v = 0.0
        for j in range(n):
            if j == i:
                continue
            dx = q[i, 0] - q[j, 0]
            dy = q[i, 1] - q[j, 1]
            c = weights[j] * INV_2PI / (dx * dx + dy * dy)
            u -= c * dy
            v += c * dx
        out[i, 0] = u
        out[i, 1] = v


@njit(cache=True)
def singular_self_field(x, y, wsb):
    """``singular_field`` for targets == sources with the diagonal excluded,
    visiting each unordered pair once."""
    n = x.shape[0]
    P = np.zeros(n)
    D1 = np.zeros(n)
    D2 = np.zeros(n)
    min_r2 = np.inf
    for i in range(n):
        xi = x[i]
        yi = y[i]
        wi = wsb[i]
        p = 0.0
        d1 = 0.0
        d2 = 0.0
        for j in range(i + 1, n):
            dx = xi - x[j]
            dy = yi - y[j]
            r2 = dx * dx + dy * dy
            if r2 < min_r2:
                min_r2 = r2
            lg = -0.5 * math.log(r2)
            inv = 1.0 / r2
            wj = wsb[j]
            p += wj * lg
            P[j] += wi * lg
            d1 -= wj * inv * dx
            d2 -= wj * inv * dy
            D1[j] += wi * inv * dx
            D2[j] += wi * inv * dy
        P[i] += p
        D1[i] += d1
        D2[i] += d2
    for i in range(n):
        P[i] *= INV_2PI
        D1[i] *= INV_2PI
        D2[i] *= INV_2PI
    return P, D1, D2, min_r2
