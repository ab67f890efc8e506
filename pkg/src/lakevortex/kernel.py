"""Tabulated lake kernel ``g_b(x, y) = sqrt(b(x) b(y)) g(x - y) + S_b(x, y)``.

``S_b(., y_k)`` is solved on the full grid for every node ``y_k`` of an
``m x m`` source lattice covering the box ``[-L/2, L/2]^2``.  Lattice nodes
coincide with grid nodes.  Each slice is only defined up to its own constant;
the constants are fixed by least squares against the symmetry defect before
anything else is done.

Evaluation uses a tensor-product cubic B-spline: fine (grid spacing) in the
field point, coarse (lattice spacing) in the source point.  With ``T(x; y)``
the interpolant, ``S(x, y) = (T(x; y) + T(y; x)) / 2`` is exactly symmetric,
reproduces lattice pairs, and its x-gradient is the analytic derivative of
the same interpolant, so forces are consistent with the interaction energy.
"""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import _bspline, _pairs
from .depth import DepthField
from .elliptic import log_cell_average, solve_lake_elliptic
from .errors import CacheMismatch, DiagonalSingularity, DomainError, NonConvergence, OutOfDomain
from .grid import Grid, ScalarGrid

MAGIC = b"LAKEKNL1"
_HEADER = struct.Struct("<IIdd")
_DIAG_EPS = 1e-14
_CHUNK = 8192


@dataclass(eq=False)
class KernelTable:
    """Immutable table of ``S_b`` slices; see module docstring."""

    geometry: Grid
    m: int
    S: np.ndarray                  # (m*m, n, n), gauge fixed and shifted
    c0: float
    fingerprint: bytes
    asymmetry: float = 0.0         # pre-symmetrization max defect / max |S|
    is_zero: bool = False
    _coef: np.ndarray = field(default=None, repr=False)
    _origin: float = field(default=0.0, repr=False)

    def __post_init__(self):
        n, m = self.geometry.n, self.m
        if m < 2:
            raise DomainError("source lattice needs m >= 2")
        if n % (2 * (m - 1)):
            raise DomainError(f"grid n={n} is incompatible with lattice m={m}: "
                              "n must be divisible by 2*(m-1) so lattice nodes are grid nodes")
        self.S = np.ascontiguousarray(self.S, dtype=float)
        self.S.setflags(write=False)
        if self._coef is None:
            self._coef = _coefficients(self.S, n, m, self.window)
        # interpolation roundoff at the origin; removed so that S(0, 0) is exactly 0
        self._origin = 0.0
        if not self.is_zero:
            z = np.zeros((1, 2))
            self._origin = float(_pair_eval(self, z, z, False)[0])

    # -- lattice geometry ---------------------------------------------------

    @property
    def R(self) -> float:
        return 0.5 * self.geometry.L

    @property
    def spacing(self) -> float:
        return 2.0 * self.R / (self.m - 1)

    @property
    def window(self):
        """``(offset, width)`` of the fine-coefficient crop around the box."""
        n = self.geometry.n
        return n // 4 - 2, n // 2 + 6

    @property
    def source_points(self) -> np.ndarray:
        t = -self.R + self.spacing * np.arange(self.m)
        return np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)

    @property
    def dS(self) -> np.ndarray:
        """Centered-difference x-gradients of the stored slices, (m*m, 2, n, n)."""
        h = self.geometry.h
        out = np.empty((self.m**2, 2) + self.S.shape[1:])
        for k in range(self.m**2):
            out[k] = np.gradient(self.S[k], h, edge_order=2)
        return out

    def lattice_matrix(self) -> np.ndarray:
        """``S(y_l, y_k)`` for all lattice pairs via the symmetric evaluation."""
        y = self.source_points
        K = len(y)
        X = np.repeat(y, K, axis=0)
        Y = np.tile(y, (K, 1))
        return eval_S(self, X, Y).reshape(K, K)

    def check_box(self, *arrays):
        R = self.R * (1.0 + 1e-12)
        for a in arrays:
            a = np.asarray(a)
            if a.size and (not np.all(np.isfinite(a)) or np.max(np.abs(a)) > R):
                raise OutOfDomain(f"point outside the kernel box [-{self.R:g}, {self.R:g}]^2")


def _coefficients(S, n, m, window):
    off, width = window
    coef = _bspline.prefilter(S.reshape(m, m, n, n), axes=(0, 1, 2, 3))
    coef = coef[:, :, off:off + width, off:off + width]
    return np.ascontiguousarray(coef.reshape(m * m, width * width))


# -- construction -----------------------------------------------------------

def _snake(m):
    order = []
    for i in range(m):
        cols = range(m) if i % 2 == 0 else range(m - 1, -1, -1)
        order.extend(i * m + j for j in cols)
    return order


def source_rhs(depth: DepthField, geometry: Grid, y) -> np.ndarray:
    """``-g(x - y) sqrt(b(y)) lap(1/sqrt(b))(x)`` on the grid, with the
    self-cell average of ``g`` at ``x = y``."""
    pts = geometry.points
    d = pts - np.asarray(y, dtype=float)
    r = np.hypot(d[..., 0], d[..., 1])
    zero = r == 0.0
    r[zero] = 1.0
    g = -np.log(r) / (2.0 * np.pi)
    g[zero] = log_cell_average(geometry.h)
    lap = depth.evaluate(pts).lap_inv_sqrt_b
    sb = float(np.sqrt(depth.b(np.asarray(y, dtype=float))))
    return -g * sb * lap


def build_kernel_table(depth: DepthField, geometry: Grid, m: int = 17,
                       tol: float = 1e-10, max_iter: int = 200, theta: float = 1.0,
                       progress=None) -> KernelTable:
    """Solve for ``S_b(., y_k)`` at every lattice node and assemble the table."""
    n = geometry.n
    if m < 2:
        raise DomainError("source lattice needs m >= 2")
    if n % (2 * (m - 1)):
        raise DomainError(f"grid n={n} is incompatible with lattice m={m}")
    fp = depth.fingerprint()
    if depth.is_constant:
        S = np.zeros((m * m, n, n))
        return KernelTable(geometry, m, S, 0.0, fp, 0.0, True)

    R = 0.5 * geometry.L
    t = -R + (2 * R / (m - 1)) * np.arange(m)
    ys = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)
    S = np.empty((m * m, n, n))
    psi = None
    for count, k in enumerate(_snake(m)):
        rhs = ScalarGrid(geometry, source_rhs(depth, geometry, ys[k]))
        try:
            psi = solve_lake_elliptic(depth, geometry, rhs, tol=tol, max_iter=max_iter,
                                      theta=theta, psi0=psi)
        except NonConvergence as exc:
            raise NonConvergence(f"source {k} at y={tuple(ys[k])}: {exc}",
                                 iterations=exc.iterations, source_index=k) from exc
        S[k] = psi.values
        if progress is not None:
            progress(count + 1, m * m)

    # gauge: slice k carries an unknown constant c_k; D[l, k] = c_k - c_l
    idx = np.array([geometry.index_of(c) for c in t])
    I = idx[:, None].repeat(m, 1).ravel()
    J = idx[None, :].repeat(m, 0).ravel()
    V = S[:, I, J]                       # V[k, l] = S_k(y_l)
    D = V.T - V
    c = D.mean(axis=0)
    S -= c[:, None, None]
    V = V - c[:, None]
    scale = float(np.max(np.abs(V)))
    asym = float(np.max(np.abs(V - V.T)) / scale) if scale > 0 else 0.0

    table = KernelTable(geometry, m, S, 0.0, fp, asym)
    c0 = table._origin
    S = S - c0
    return KernelTable(geometry, m, S, c0, fp, asym)


# -- pointwise evaluation ---------------------------------------------------

def _fine(table, pts):
    off, width = table.window
    g = table.geometry
    return _bspline.weights_2d(pts, -g.L, g.h, g.n, off, width)


def _coarse(table, pts):
    return _bspline.weights_2d(pts, -table.R, table.spacing, table.m)


def _pair_eval(table, x, y, grad):
    coef = table._coef
    ic_y, wc_y, dc1_y, dc2_y = _coarse(table, y)
    if_x, wf_x, df1_x, df2_x = _fine(table, x)
    ic_x, wc_x, dc1_x, dc2_x = _coarse(table, x)
    if_y, wf_y, _, _ = _fine(table, y)
    A = coef[ic_y[:, :, None], if_x[:, None, :]]        # T(x; y)
    B = coef[ic_x[:, :, None], if_y[:, None, :]]        # T(y; x)
    if not grad:
        return 0.5 * (np.einsum("ka,kap,kp->k", wc_y, A, wf_x)
                      + np.einsum("ka,kap,kp->k", wc_x, B, wf_y)) - table._origin
    g1 = np.einsum("ka,kap,kp->k", wc_y, A, df1_x) + np.einsum("ka,kap,kp->k", dc1_x, B, wf_y)
    g2 = np.einsum("ka,kap,kp->k", wc_y, A, df2_x) + np.einsum("ka,kap,kp->k", dc2_x, B, wf_y)
    return 0.5 * np.stack([g1, g2], axis=-1)


def diagonal(table: KernelTable, x):
    """``S(x, x)`` and ``grad_x S(x, y)|_{y=x}`` sharing one stencil gather."""
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    if table.is_zero:
        return np.zeros(len(x)), np.zeros((len(x), 2))
    table.check_box(x)
    ic, wc, dc1, dc2 = _coarse(table, x)
    jf, wf, df1, df2 = _fine(table, x)
    A = table._coef[ic[:, :, None], jf[:, None, :]]
    Aw = np.einsum("kap,kp->ka", A, wf)
    val = np.einsum("ka,ka->k", wc, Aw) - table._origin
    g1 = 0.5 * (np.einsum("ka,kap,kp->k", wc, A, df1) + np.einsum("ka,ka->k", dc1, Aw))
    g2 = 0.5 * (np.einsum("ka,kap,kp->k", wc, A, df2) + np.einsum("ka,ka->k", dc2, Aw))
    return val, np.stack([g1, g2], axis=-1)


def _broadcast_pairs(table, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    table.check_box(x, y)
    return x.shape[:-1], x.reshape(-1, 2), y.reshape(-1, 2)


def _chunked(table, x, y, grad):
    K = len(x)
    out = np.empty((K, 2) if grad else K)
    for s in range(0, K, _CHUNK):
        out[s:s + _CHUNK] = _pair_eval(table, x[s:s + _CHUNK], y[s:s + _CHUNK], grad)
    return out


def eval_S(table: KernelTable, x, y):
    """Symmetric interpolated ``S_b(x, y)``; broadcasts over leading axes."""
    shape, xf, yf = _broadcast_pairs(table, x, y)
    if table.is_zero:
        return np.zeros(shape)[()] if shape else 0.0
    out = _chunked(table, xf, yf, False).reshape(shape)
    return out[()] if shape else float(out)


def grad_x_S(table: KernelTable, x, y):
    """``grad_x S_b(x, y)``, the exact derivative of the symmetric interpolant."""
    shape, xf, yf = _broadcast_pairs(table, x, y)
    if table.is_zero:
        return np.zeros(shape + (2,))
    return _chunked(table, xf, yf, True).reshape(shape + (2,))


def _diff(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x - y
    r = np.hypot(d[..., 0], d[..., 1])
    if np.any(r < _DIAG_EPS):
        raise DiagonalSingularity("kernel evaluated on the diagonal x == y")
    return x, y, d, r


def eval_g_b(table: KernelTable, depth: DepthField, x, y):
    """``sqrt(b(x) b(y)) g(x - y) + S_b(x, y)``."""
    x, y, _, r = _diff(x, y)
    sing = np.sqrt(depth.b(x) * depth.b(y)) * (-np.log(r) / (2.0 * np.pi))
    return sing + eval_S(table, x, y)


def grad_g_b_terms(table: KernelTable, depth: DepthField, x, y):
    """The three pieces of ``grad_x g_b``: depth-gradient, log-gradient, smooth."""
    x, y, d, r = _diff(x, y)
    bx, by = depth.b(x), depth.b(y)
    g = -np.log(r) / (2.0 * np.pi)
    t1 = (depth.grad(x) / (2.0 * np.sqrt(bx))[..., None]) * (np.sqrt(by) * g)[..., None]
    t2 = np.sqrt(bx * by)[..., None] * (-d / (2.0 * np.pi * r**2)[..., None])
    t3 = grad_x_S(table, x, y)
    return t1, t2, t3


def grad_x_g_b(table: KernelTable, depth: DepthField, x, y):
    t1, t2, t3 = grad_g_b_terms(table, depth, x, y)
    return t1 + t2 + t3


# -- sums over many sources ---------------------------------------------------

def smooth_sums(table: KernelTable, targets, sources, weights, potential=True, gradient=True):
    """``sum_j w_j S(x_i, y_j)`` and ``sum_j w_j grad_x S(x_i, y_j)`` over all j.

    Uses the separable spline structure, so the cost is linear in the number
    of targets plus sources.
    """
    x = np.asarray(targets, dtype=float).reshape(-1, 2)
    y = np.asarray(sources, dtype=float).reshape(-1, 2)
    w = np.asarray(weights, dtype=float).ravel()
    nt = len(x)
    pot = np.zeros(nt) if potential else None
    grad = np.zeros((nt, 2)) if gradient else None
    if table.is_zero or len(y) == 0 or nt == 0:
        return pot, grad
    table.check_box(x, y)
    coef = table._coef
    m2, P = coef.shape

    # sources on the coarse basis (for T(x; y)) and the fine basis (for T(y; x))
    ic, wc, _, _ = _coarse(table, y)
    v_c = np.bincount(ic.ravel(), weights=(wc * w[:, None]).ravel(), minlength=m2)
    jf, wf, _, _ = _fine(table, y)
    cols, inv = np.unique(jf.ravel(), return_inverse=True)
    vals = np.bincount(inv, weights=(wf * w[:, None]).ravel(), minlength=len(cols))
    G = coef[:, cols] @ vals                             # (m2,)

    tf, twf, tdf1, tdf2 = _fine(table, x)
    tc, twc, tdc1, tdc2 = _coarse(table, x)
    tcols, tinv = np.unique(tf.ravel(), return_inverse=True)
    if len(tcols) < P // 2:
        F = (v_c @ coef[:, tcols])[tinv.reshape(tf.shape)]
    else:
        F = (v_c @ coef)[tf]
    Gt = G[tc]
    if potential:
        pot = 0.5 * (np.sum(twf * F, axis=1) + np.sum(twc * Gt, axis=1)) - table._origin * w.sum()
    if gradient:
        grad = 0.5 * np.stack([np.sum(tdf1 * F, axis=1) + np.sum(tdc1 * Gt, axis=1),
                               np.sum(tdf2 * F, axis=1) + np.sum(tdc2 * Gt, axis=1)], axis=-1)
    return pot, grad


def _coincident_index(targets, sources):
    """Index of a source exactly equal to each target, or -1."""
    lookup = {}
    for j, p in enumerate(map(tuple, sources)):
        lookup.setdefault(p, j)
    return np.array([lookup.get(tuple(p), -1) for p in targets], dtype=np.int64)


def field_sums(table, depth, targets, sources, weights, self_index=None, potential=True):
    """Kernel potential and x-gradient sums at the targets.

    Returns ``(phi, grad_phi, min_r2)`` with ``phi_i = sum_j w_j g_b(x_i, y_j)``
    and ``grad_phi_i = sum_j w_j grad_x g_b(x_i, y_j)``, excluding source
    ``self_index[i]`` from target ``i`` (or exact coincidences when
    ``self_index`` is None).  ``min_r2`` is the smallest squared distance
    among the pairs summed.  With ``potential=False`` the smooth part of
    ``phi`` is skipped and ``phi`` is None.
    """
    x = np.ascontiguousarray(np.asarray(targets, dtype=float).reshape(-1, 2))
    y = np.ascontiguousarray(np.asarray(sources, dtype=float).reshape(-1, 2))
    w = np.asarray(weights, dtype=float).ravel()
    if self_index is None:
        self_index = _coincident_index(x, y) if len(y) else np.full(len(x), -1)
    self_index = np.asarray(self_index, dtype=np.int64)
    bx = depth.b(x)
    sbx = np.sqrt(bx)
    wsb = w * np.sqrt(depth.b(y)) if len(y) else w
    self_pairs = len(x) == len(y) and np.array_equal(self_index, np.arange(len(x))) and np.array_equal(x, y)
    if self_pairs:
        P, D1, D2, min_r2 = _pairs.singular_self_field(x[:, 0].copy(), x[:, 1].copy(), wsb)
    else:
        P, D1, D2, min_r2 = _pairs.singular_field(x[:, 0].copy(), x[:, 1].copy(), y[:, 0].copy(),
                                                  y[:, 1].copy(), wsb, self_index, False)
    if min_r2 < _DIAG_EPS**2:
        raise DiagonalSingularity("distinct source and target coincide")
    gb = depth.grad(x)
    phi = sbx * P
    grad = gb / (2.0 * sbx)[:, None] * P[:, None] + sbx[:, None] * np.stack([D1, D2], axis=-1)
    if table.is_zero or not len(y):
        return phi, grad, min_r2
    sp, sg = smooth_sums(table, x, y, w, potential=potential)
    has = self_index >= 0
    if self_pairs:
        dv, dg = diagonal(table, x)
        sg -= w[:, None] * dg
        if potential:
            sp -= w * dv
    elif np.any(has):
        yi = y[self_index[has]]
        sg[has] -= w[self_index[has], None] * grad_x_S(table, x[has], yi)
        if potential:
            sp[has] -= w[self_index[has]] * eval_S(table, x[has], yi)
    grad = grad + sg
    phi = phi + sp if potential else None
    return phi, grad, min_r2


def velocity_sum(table: KernelTable, depth: DepthField, targets, sources, strengths):
    """``u_i = -(1/b(x_i)) sum_j G_j perp(grad_x g_b(x_i, y_j))``.

    A source sitting exactly on a target is skipped for that target.
    """
    x = np.asarray(targets, dtype=float).reshape(-1, 2)
    if len(np.asarray(strengths).ravel()) == 0:
        return np.zeros_like(x)
    _, grad, _ = field_sums(table, depth, x, sources, strengths, potential=False)
    b = depth.b(x)
    return np.stack([grad[:, 1], -grad[:, 0]], axis=-1) / b[:, None]


def potential_sum(table: KernelTable, depth: DepthField, targets, sources, weights):
    """``sum_j w_j g_b(x_i, y_j)`` (exact coincidences skipped)."""
    phi, _, _ = field_sums(table, depth, targets, sources, weights)
    return phi


# -- cache ------------------------------------------------------------------

def save_table(table: KernelTable, path) -> None:
    """Write the cache file atomically, followed by a SHA-256 of its contents."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    sha = hashlib.sha256()
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".lakeknl-")
    try:
        with os.fdopen(fd, "wb") as fh:
            def put(buf):
                sha.update(buf)
                fh.write(buf)

            g = table.geometry
            put(MAGIC)
            put(_HEADER.pack(g.n, table.m, g.L, table.c0))
            put(table.fingerprint)
            for k in range(table.m**2):
                put(np.ascontiguousarray(table.S[k], dtype="<f8").tobytes())
            for k in range(table.m**2):
                grad = np.stack(np.gradient(table.S[k], g.h, edge_order=2))
                put(np.ascontiguousarray(grad, dtype="<f8").tobytes())
            fh.write(sha.digest())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_table(path, depth: DepthField, geometry: Grid, m: int) -> KernelTable:
    """Load a cache file, rejecting any mismatch or corruption with CacheMismatch."""
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CacheMismatch(f"cannot read kernel cache {path}: {exc}") from exc
    head = len(MAGIC) + _HEADER.size + 32
    if len(data) < head + 32 or data[:len(MAGIC)] != MAGIC:
        raise CacheMismatch(f"{path} is not a kernel cache file")
    n, mm, L, c0 = _HEADER.unpack_from(data, len(MAGIC))
    fp = data[len(MAGIC) + _HEADER.size:head]
    if hashlib.sha256(data[:-32]).digest() != data[-32:]:
        raise CacheMismatch(f"{path}: checksum mismatch (file corrupted)")
    if fp != depth.fingerprint():
        raise CacheMismatch(f"{path}: depth fingerprint mismatch")
    if (n, mm, L) != (geometry.n, m, geometry.L):
        raise CacheMismatch(f"{path}: geometry (n={n}, m={mm}, L={L}) differs from "
                            f"requested (n={geometry.n}, m={m}, L={geometry.L})")
    size = mm * mm * n * n
    if len(data) != head + 3 * size * 8 + 32:
        raise CacheMismatch(f"{path}: truncated payload")
    S = np.frombuffer(data, dtype="<f8", count=size, offset=head).reshape(mm * mm, n, n).astype(float)
    return KernelTable(geometry, mm, S, c0, fp, 0.0, depth.is_constant and not S.any())


def load_or_build(path, depth: DepthField, geometry: Grid, m: int, log=None, **kw) -> KernelTable:
    """Load the cache if it matches, else build and (re)write it."""
    if path is not None and os.path.exists(path):
        try:
            return load_table(path, depth, geometry, m)
        except CacheMismatch as exc:
            if log is not None:
                log(f"kernel cache rejected ({exc}); rebuilding")
    table = build_kernel_table(depth, geometry, m, **kw)
    if path is not None:
        save_table(table, path)
    return table
