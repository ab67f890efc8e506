"""Analytic bathymetry fields with exact derivatives.

Every family has the form ``b(x) = b0 + a * exp(-Q(x))`` with
``Q(x) = x1**2 / w1**2 + x2**2 / w2**2`` (the constant family has ``a = 0``),
so values, gradients, Hessians and ``laplacian(1/sqrt(b))`` are available
in closed form.

The rotation convention used throughout the package is
``perp(x1, x2) = (-x2, x1)``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DomainError, ValidationFailure

FAMILIES = ("constant", "radial-gaussian-bump", "anisotropic-bump")


def perp(v):
    """Rotate vectors (last axis of length 2) by +pi/2."""
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    out[..., 0] = -v[..., 1]
    out[..., 1] = v[..., 0]
    return out


class DepthSample(NamedTuple):
    b: np.ndarray
    grad_b: np.ndarray
    hess_b: np.ndarray
    lap_inv_sqrt_b: np.ndarray


@dataclass(frozen=True)
class DepthField:
    """Immutable analytic depth field.

    Parameters by family:

    * ``constant``: ``[b0]``
    * ``radial-gaussian-bump``: ``[a, w, b0]`` (``b0`` defaults to 1)
    * ``anisotropic-bump``: ``[a, w1, w2, b0]`` (``b0`` defaults to 1)
    """

    family: str
    params: tuple = field(default=())
    gamma: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown depth family {self.family!r}; expected one of {FAMILIES}")
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        a, w1, w2, b0 = self._coefficients(params)
        if not all(np.isfinite([a, w1, w2, b0])):
            raise DomainError("depth parameters must be finite")
        if w1 <= 0 or w2 <= 0:
            raise DomainError("bump widths must be positive")
        if not self.gamma > 0:
            raise DomainError("decay exponent gamma must be positive")

    def _coefficients(self, params=None):
        p = self.params if params is None else params
        if self.family == "constant":
            if len(p) > 1:
                raise DomainError("constant depth takes a single parameter [b0]")
            return 0.0, 1.0, 1.0, (p[0] if p else 1.0)
        if self.family == "radial-gaussian-bump":
            if len(p) not in (2, 3):
                raise DomainError("radial-gaussian-bump takes [a, w] or [a, w, b0]")
            return p[0], p[1], p[1], (p[2] if len(p) == 3 else 1.0)
        if len(p) not in (3, 4):
            raise DomainError("anisotropic-bump takes [a, w1, w2] or [a, w1, w2, b0]")
        return p[0], p[1], p[2], (p[3] if len(p) == 4 else 1.0)

    @property
    def coefficients(self):
        """``(a, w1, w2, b0)``."""
        return self._coefficients()

    @property
    def is_constant(self) -> bool:
        return self.coefficients[0] == 0.0

    @classmethod
    def from_config(cls, block: dict) -> "DepthField":
        return cls(block["family"], tuple(block.get("params", ())), float(block.get("gamma", 1.0)))

    def to_config(self) -> dict:
        return {"family": self.family, "params": list(self.params), "gamma": self.gamma}

    def fingerprint(self) -> bytes:
        """SHA-256 of the canonical JSON form of the depth block."""
        text = json.dumps(self.to_config(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).digest()

    # -- evaluation -------------------------------------------------------

    def b(self, x):
        a, w1, w2, b0 = self.coefficients
        x = np.asarray(x, dtype=float)
        if a == 0.0:
            return np.full(x.shape[:-1], b0)
        q = x[..., 0] ** 2 / w1**2 + x[..., 1] ** 2 / w2**2
        return b0 + a * np.exp(-q)

    def grad(self, x):
        a, w1, w2, _ = self.coefficients
        x = np.asarray(x, dtype=float)
        if a == 0.0:
            return np.zeros_like(x)
        q = x[..., 0] ** 2 / w1**2 + x[..., 1] ** 2 / w2**2
        e = a * np.exp(-q)
        g = np.empty_like(x)
        g[..., 0] = -e * 2.0 * x[..., 0] / w1**2
        g[..., 1] = -e * 2.0 * x[..., 1] / w2**2
        return g

    def evaluate(self, x) -> DepthSample:
        """Return b, grad b, Hessian of b and laplacian(1/sqrt(b)) at ``x``."""
        a, w1, w2, b0 = self.coefficients
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        if a == 0.0:
            return DepthSample(np.full(shape, b0), np.zeros(shape + (2,)),
                               np.zeros(shape + (2, 2)), np.zeros(shape))
        inv = np.array([1.0 / w1**2, 1.0 / w2**2])
        q = x[..., 0] ** 2 * inv[0] + x[..., 1] ** 2 * inv[1]
        e = a * np.exp(-q)
        dq = 2.0 * x * inv                                     # grad Q
        b = b0 + e
        grad_b = -e[..., None] * dq
        hess = e[..., None, None] * (dq[..., :, None] * dq[..., None, :] - 2.0 * np.diag(inv))
        lap_b = hess[..., 0, 0] + hess[..., 1, 1]
        grad_sq = np.sum(grad_b**2, axis=-1)
        lap_inv_sqrt = -0.5 * b**-1.5 * lap_b + 0.75 * b**-2.5 * grad_sq
        return DepthSample(b, grad_b, hess, lap_inv_sqrt)

    def drift(self, x):
        """The level-set field ``-perp(grad b) / b``."""
        return -perp(self.grad(x)) / self.b(x)[..., None]


def depth_eval(field: DepthField, x):
    """Exact ``(b, grad_b, hess_b, lap_inv_sqrt_b)`` at ``x``."""
    return field.evaluate(x)


class DepthReport(NamedTuple):
    min_b: float
    max_b: float
    max_weighted_derivative: float
    weighted_by_radius: np.ndarray
    radii: np.ndarray
    decay_ok: bool


def validate_depth(field: DepthField, radii: Sequence[float], n_grid: int = 512,
                   n_angles: int = 64, n_random: int = 256, seed: int = 0) -> DepthReport:
    """Sample the standing assumptions on ``b`` (positivity, boundedness, decay).

    ``min_b``/``max_b`` come from nested ``n_grid**2`` lattices (one per decade
    up to the largest radius) plus random far points; the weighted derivative
    ``(1+r)**(4+gamma) * (|grad b| + |D2 b|)`` is maximised over ``n_angles``
    points on each circle.  Raises ValidationFailure if ``b <= 0`` anywhere
    sampled.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0:
        raise DomainError("radii must be nonempty")
    rmax = max(float(np.max(np.abs(radii))), 1.0)
    # nested lattices, one per decade, so that unit-scale features near the origin are resolved
    lo, hi = np.inf, -np.inf
    for half_side in np.geomspace(1.0, rmax, max(1, int(np.ceil(np.log10(rmax)))) + 1):
        side = np.linspace(-half_side, half_side, n_grid + 1)
        b = field.b(np.stack(np.meshgrid(side, side, indexing="ij"), axis=-1))
        lo, hi = min(lo, float(b.min())), max(hi, float(b.max()))
    rng = np.random.default_rng(seed)
    r_far = rng.uniform(0.0, 10.0 * rmax, n_random)
    th = rng.uniform(0.0, 2 * np.pi, n_random)
    b_far = field.b(np.stack([r_far * np.cos(th), r_far * np.sin(th)], axis=-1))
    min_b = min(lo, float(b_far.min()))
    max_b = max(hi, float(b_far.max()))
    if not min_b > 0:
        raise ValidationFailure(f"depth is not positive: min sampled b = {min_b:.6g}")

    angles = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    weighted = np.empty(radii.size)
    for k, r in enumerate(radii):
        pts = np.stack([r * np.cos(angles), r * np.sin(angles)], axis=-1)
        s = field.evaluate(pts)
        mag = np.linalg.norm(s.grad_b, axis=-1) + np.linalg.norm(s.hess_b, axis=(-2, -1), ord=2)
        weighted[k] = np.max((1.0 + abs(r)) ** (4.0 + field.gamma) * mag)
    order = np.argsort(radii)
    tail = weighted[order]
    # growth over the outer half of the sampled radii signals a decay violation
    half = tail[len(tail) // 2:]
    decay_ok = bool(np.all(np.diff(half) <= 1e-12 * max(1.0, half.max())))
    return DepthReport(min_b, max_b, float(weighted.max()), weighted, radii, decay_ok)
