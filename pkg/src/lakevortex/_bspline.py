"""Uniform cubic B-spline bases with mirror extension (scipy.ndimage convention)."""

import numpy as np
from scipy import ndimage


def prefilter(values, axes):
    """Interpolating cubic B-spline coefficients along ``axes`` (mirror boundary)."""
    out = np.asarray(values, dtype=float)
    for ax in axes:
        out = ndimage.spline_filter1d(out, order=3, axis=ax, mode="mirror", output=np.float64)
    return out


def _mirror(k, n):
    if n == 1:
        return np.zeros_like(k)
    period = 2 * (n - 1)
    k = np.mod(k, period)
    return np.where(k > n - 1, period - k, k)


def weights_1d(u, n):
    """Basis indices, weights and d/du weights at index coordinates ``u``.

    Returns arrays of shape ``u.shape + (4,)``.
    """
    u = np.asarray(u, dtype=float)
    i = np.floor(u)
    t = u - i
    t2, t3 = t * t, t * t * t
    s = 1.0 - t
    w = np.stack([s * s * s / 6.0, (3 * t3 - 6 * t2 + 4) / 6.0,
                  (-3 * t3 + 3 * t2 + 3 * t + 1) / 6.0, t3 / 6.0], axis=-1)
    dw = np.stack([-0.5 * s * s, 1.5 * t2 - 2 * t, -1.5 * t2 + t + 0.5, 0.5 * t2], axis=-1)
    idx = i.astype(np.int64)[..., None] + np.arange(-1, 3)
    return _mirror(idx, n), w, dw


def weights_2d(points, origin, spacing, n, offset=0, width=None):
    """Tensor-product weights for points of shape (K, 2).

    ``origin``/``spacing``/``n`` describe the node lattice along each axis;
    indices are shifted by ``offset`` into a cropped coefficient window of
    side ``width`` and flattened row-major.  Returns ``idx, w, wx1, wx2``
    each of shape (K, 16); derivative weights are in physical units.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    u = (pts - origin) / spacing
    i1, w1, d1 = weights_1d(u[:, 0], n)
    i2, w2, d2 = weights_1d(u[:, 1], n)
    width = n if width is None else width
    i1 = i1 - offset
    i2 = i2 - offset
    if np.any(i1 < 0) or np.any(i2 < 0) or np.any(i1 >= width) or np.any(i2 >= width):
        raise IndexError("spline stencil leaves the coefficient window")
    idx = (i1[:, :, None] * width + i2[:, None, :]).reshape(-1, 16)
    w = (w1[:, :, None] * w2[:, None, :]).reshape(-1, 16)
    wx1 = (d1[:, :, None] * w2[:, None, :]).reshape(-1, 16) / spacing
    wx2 = (w1[:, :, None] * d2[:, None, :]).reshape(-1, 16) / spacing
    return idx, w, wx1, wx2
