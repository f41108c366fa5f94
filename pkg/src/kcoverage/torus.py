"""Geometric kernel on the flat torus T^d = R^d / Z^d.

Points are plain numpy arrays with coordinates in [0, 1).  All functions are
pure.  The batched circumsphere solver :func:`circumspheres` is the single
implementation used by both the scalar API and the vectorized enumerator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import Degenerate, DiameterTooLarge, DimensionMismatch

TOL_GEO = 1e-9
TOL_BARY = 1e-9
COND_MAX = 1e12
R_CONV = 0.25


def ball_volume(d: int) -> float:
    """Volume omega_d of the unit ball in R^d."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^{d-1}, equal to d * omega_d."""
    return d * ball_volume(d)


def canonicalize(x):
    """Map coordinates into [0, 1)."""
    x = np.asarray(x, dtype=float)
    y = x - np.floor(x)
    # x - floor(x) rounds to 1.0 for tiny negative x
    return np.where(y >= 1.0, 0.0, y)


def wrap(diff):
    """Minimal representative of a coordinate difference, in (-1/2, 1/2].

    A difference of exactly 1/2 maps to +1/2.
    """
    diff = np.asarray(diff, dtype=float)
    return diff - np.ceil(diff - 0.5)


def _as_point(x) -> np.ndarray:
    p = np.atleast_1d(np.asarray(x, dtype=float))
    if p.ndim != 1 or p.size < 1:
        raise DimensionMismatch(f"expected a 1-d coordinate vector, got shape {p.shape}")
    return p


def _check_same_dim(*points: np.ndarray) -> int:
    dims = {p.shape[-1] for p in points}
    if len(dims) != 1:
        raise DimensionMismatch(f"points have mixed dimensions {sorted(dims)}")
    return dims.pop()


def torus_distance(x, y) -> float:
    """Toroidal distance min over integer shifts of |x - y + shift|."""
    x, y = _as_point(x), _as_point(y)
    _check_same_dim(x, y)
    return float(np.sqrt(np.sum(wrap(y - x) ** 2)))


def torus_distances(points: np.ndarray, y) -> np.ndarray:
    """Vectorized distances from every row of ``points`` to ``y``."""
    diff = wrap(np.asarray(points, dtype=float) - np.asarray(y, dtype=float))
    return np.sqrt(np.sum(diff * diff, axis=-1))


def displacement(x, y) -> np.ndarray:
    """Minimal displacement v with canonicalize(x + v) == y, coordinates in (-1/2, 1/2]."""
    x, y = _as_point(x), _as_point(y)
    _check_same_dim(x, y)
    return wrap(y - x)


@dataclass(frozen=True)
class LiftedConfig:
    base: np.ndarray
    offsets: np.ndarray  # (m, d); lifted point i is base + offsets[i]
    diameter: float

    @property
    def points(self) -> np.ndarray:
        return self.base + self.offsets


@dataclass(frozen=True)
class Circumsphere:
    center: np.ndarray  # canonical torus coordinates
    center_lifted: np.ndarray  # in the chart of the LiftedConfig it was solved in
    radius: float
    cond: float


def _pairwise_max(offsets: np.ndarray) -> float:
    if len(offsets) < 2:
        return 0.0
    diff = offsets[:, None, :] - offsets[None, :, :]
    return float(np.sqrt(np.max(np.sum(diff * diff, axis=-1))))


def lift(points, anchor=None) -> LiftedConfig:
    """Lift torus points into one Euclidean chart.

    Without ``anchor`` the chart is based at ``points[0]`` and every pairwise
    toroidal distance must be below 1/2.  With ``anchor`` each point is placed
    at its minimal displacement from the anchor; this is how several
    circumspheres of the same subset (e.g. two antipodal points on the circle)
    are told apart.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("cannot lift an empty configuration")
    if anchor is None:
        base = pts[0]
        offsets = wrap(pts - base)
        m = len(pts)
        for i in range(m):
            for j in range(i + 1, m):
                if np.sqrt(np.sum(wrap(pts[j] - pts[i]) ** 2)) >= 0.5:
                    raise DiameterTooLarge(
                        f"points {i} and {j} are at toroidal distance >= 1/2")
        offsets[0] = 0.0
    else:
        base = _as_point(anchor)
        _check_same_dim(base, pts)
        offsets = wrap(pts - base)
        if np.any(np.sqrt(np.sum(offsets ** 2, axis=1)) >= 0.5):
            raise DiameterTooLarge("a point is at distance >= 1/2 from the anchor")
    return LiftedConfig(base=base, offsets=offsets, diameter=_pairwise_max(offsets))


def circumspheres(lifted: np.ndarray):
    """Batched circumsphere solve.

    ``lifted`` has shape (B, m, d) with 2 <= m <= d + 1.  Returns
    ``(center, radius, bary, cond)`` where ``center`` is in the same chart,
    ``bary`` holds the m barycentric coordinates of the center with respect
    to the simplex and ``cond`` is the 2-norm condition number of the Gram
    system.  Numerically singular rows get NaN outputs.
    """
    lifted = np.asarray(lifted, dtype=float)
    B, m, d = lifted.shape
    if not 2 <= m <= d + 1:
        raise ValueError(f"need 2 <= m <= d+1 points, got m={m}, d={d}")
    x0 = lifted[:, 0, :]
    edges = lifted[:, 1:, :] - x0[:, None, :]
    gram = np.einsum("bid,bjd->bij", edges, edges)
    rhs = 0.5 * np.einsum("bid,bid->bi", edges, edges)
    if m == 2:
        g = gram[:, 0, 0]
        cond = np.where(g > 0, 1.0, np.inf)
        lam = np.where(g > 0, 0.5, np.nan)[:, None]
    else:
        eig = np.linalg.eigvalsh(gram)
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = np.where(eig[:, 0] > 0, eig[:, -1] / eig[:, 0], np.inf)
        # numerically singular rows get NaN; ill-conditioned ones are still
        # solved and left for the caller to judge against COND_MAX
        ok = cond <= 1e16
        safe = np.where(ok[:, None, None], gram, np.eye(m - 1))
        lam = np.linalg.solve(safe, rhs[..., None])[..., 0]
        lam[~ok] = np.nan
    rel = np.einsum("bi,bid->bd", lam, edges)
    center = x0 + rel
    radius = np.sqrt(np.sum(rel * rel, axis=1))
    bary = np.concatenate([1.0 - lam.sum(axis=1, keepdims=True), lam], axis=1)
    return center, radius, bary, cond


def circumsphere(X, anchor=None) -> Circumsphere:
    """Circumsphere of 2..d+1 torus points, centered in their affine hull."""
    cfg = lift(X, anchor=anchor)
    m, d = cfg.offsets.shape
    if not 2 <= m <= d + 1:
        raise ValueError(f"need 2 <= m <= d+1 points, got m={m}, d={d}")
    center, radius, _, cond = circumspheres(cfg.points[None])
    if not np.isfinite(cond[0]) or cond[0] > COND_MAX:
        raise Degenerate(f"circumsphere system condition {cond[0]:.3g} exceeds {COND_MAX:g}")
    c = center[0]
    return Circumsphere(center=canonicalize(c), center_lifted=c,
                        radius=float(radius[0]), cond=float(cond[0]))


def barycentric(lifted_simplex: np.ndarray, point: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of ``point`` (projected onto the affine hull)."""
    x0 = lifted_simplex[0]
    edges = lifted_simplex[1:] - x0
    gram = edges @ edges.T
    if gram.size and np.linalg.cond(gram) > COND_MAX:
        raise Degenerate("simplex is affinely dependent")
    lam = np.linalg.solve(gram, edges @ (point - x0)) if gram.size else np.zeros(0)
    return np.concatenate([[1.0 - lam.sum()], lam])


def in_open_simplex(X, c) -> bool:
    """True iff c lies in the open simplex spanned by X (all barycentrics > TOL_BARY)."""
    c = _as_point(c)
    cfg = lift(X, anchor=c)
    bary = barycentric(cfg.points, c)
    return bool(np.all(bary > TOL_BARY))


def simplex_volume(offsets) -> float:
    """(m-1)-volume of the simplex with the given vertices, via the Gram determinant."""
    v = np.atleast_2d(np.asarray(offsets, dtype=float))
    m = v.shape[0]
    if m < 2:
        return 0.0
    edges = v[1:] - v[0]
    det = np.linalg.det(edges @ edges.T)
    return math.sqrt(max(det, 0.0)) / math.factorial(m - 1)
