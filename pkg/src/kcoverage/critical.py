"""Critical points of the k-NN distance function on the torus.

A subset X of the sample with 2 <= |X| <= d+1 generates a critical point at
the center c of its circumsphere iff c lies in the open simplex of X and the
open circumball holds between k-|X| and k-1 sample points.  The index is
|X| + I - k and the point changes homology C(|X|-1, index) times.

Two enumerators are provided:

* :func:`enumerate_critical_points` localizes the search with a Lipschitz
  bound on the k-NN distance function and classifies candidate subsets in
  vectorized batches.  This is the production path.
* :func:`enumerate_reference` follows the direct recipe (every point owns the
  subsets of its neighborhood in which it has the smallest index) and calls
  :func:`classify_subset` one subset at a time.  It is quadratic-to-quartic
  in the local density and is kept as an independent cross-check.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import Degenerate, DegenerateTrial, DiameterTooLarge, Marginal
from .knn import SpatialIndex, ball_indices, build_index, count_in_ball, knn_distances
from .pointcloud import PointCloud
from .torus import (COND_MAX, R_CONV, TOL_BARY, TOL_GEO, canonicalize, circumspheres,
                    lift, torus_distances, wrap)


@dataclass(frozen=True)
class CriticalPoint:
    center: np.ndarray
    rho: float
    index_mu: int
    generators: tuple[int, ...]
    interior_count: int
    delta: int

    @property
    def m(self) -> int:
        return len(self.generators)

    def key(self) -> tuple:
        return (self.generators, tuple(np.round(self.center, 9)))

    def to_dict(self) -> dict:
        return {"center": [float(x) for x in self.center], "rho": float(self.rho),
                "mu": int(self.index_mu), "generators": [int(i) for i in self.generators],
                "interior_count": int(self.interior_count), "delta": int(self.delta)}

    @classmethod
    def from_dict(cls, obj: dict) -> "CriticalPoint":
        return cls(center=np.asarray(obj["center"], dtype=float), rho=float(obj["rho"]),
                   index_mu=int(obj["mu"]), generators=tuple(obj["generators"]),
                   interior_count=int(obj["interior_count"]), delta=int(obj["delta"]))


@dataclass(frozen=True)
class EnumerationWindow:
    """Critical values in the half-open interval (r_min, r_max_window]."""

    r_min: float = 0.0
    r_max_window: float = R_CONV
    mu_filter: int | None = None

    def __post_init__(self):
        if self.r_min < 0:
            raise ValueError("r_min must be >= 0")
        if self.r_max_window > R_CONV:
            raise ValueError(f"r_max_window must be <= {R_CONV}")
        if not self.r_min < self.r_max_window:
            raise ValueError("need r_min < r_max_window")

    def contains(self, rho: float) -> bool:
        return self.r_min < rho <= self.r_max_window


def subset_sizes(d: int, k: int, mu: int | None = None) -> range:
    """Admissible generator counts m for index mu (all indices if mu is None)."""
    if mu is None:
        return range(2, d + 2)
    return range(max(2, mu + 1), min(d + 1, mu + k) + 1)


def homology_changes(m: int, mu: int) -> int:
    return math.comb(m - 1, mu)


def _make_point(center, rho, m, interior, k, generators) -> CriticalPoint:
    mu = m + interior - k
    return CriticalPoint(center=canonicalize(center), rho=float(rho), index_mu=int(mu),
                         generators=tuple(sorted(int(g) for g in generators)),
                         interior_count=int(interior), delta=homology_changes(m, mu))


# --------------------------------------------------------------------------
# scalar classification


def classify_subset(X: Sequence[int], cloud: PointCloud, index: SpatialIndex, k: int,
                    anchor=None) -> CriticalPoint | None:
    """Classify one generator subset.

    Returns the critical point generated by X, or None if X does not generate
    one.  ``anchor`` selects the chart when X admits several lifts (see
    :func:`kcoverage.torus.lift`).  Raises Degenerate or Marginal.
    """
    X = list(X)
    m, d = len(X), cloud.dim
    if not 2 <= m <= d + 1:
        raise ValueError(f"subset size must be in [2, {d + 1}]")
    cfg = lift(cloud.points[X], anchor=anchor)
    center, radius, bary, cond = circumspheres(cfg.points[None])
    if not np.isfinite(cond[0]) or cond[0] > COND_MAX:
        raise Degenerate(f"condition {cond[0]:.3g} exceeds {COND_MAX:g}")
    rho = float(radius[0])
    if rho > R_CONV:
        return None
    if not np.all(bary[0] > TOL_BARY):
        return None
    interior = count_in_ball(index, canonicalize(center[0]), rho, exclude=X)
    if not k - m <= interior <= k - 1:
        return None
    return _make_point(center[0], rho, m, interior, k, X)


def _lift_choices(pts: np.ndarray) -> list[np.ndarray]:
    """Lifts of a subset relative to its first point; exact 1/2 ties give both signs."""
    off = wrap(pts - pts[0])
    ties = np.argwhere(np.abs(off) == 0.5)
    if len(ties) == 0:
        return [off]
    choices = []
    for signs in itertools.product((1.0, -1.0), repeat=len(ties)):
        o = off.copy()
        for (i, j), s in zip(ties, signs):
            o[i, j] = 0.5 * s
        choices.append(o)
    return choices


def enumerate_reference(cloud: PointCloud, k: int, window: EnumerationWindow,
                        index: SpatialIndex | None = None) -> list[CriticalPoint]:
    """Direct enumeration: each point owns the subsets of its 2*r_max neighborhood
    in which it carries the smallest index."""
    if len(cloud) < k:
        raise ValueError("cloud has fewer than k points")
    index = index or build_index(cloud)
    d = cloud.dim
    sizes = subset_sizes(d, k, window.mu_filter)
    reach = 2.0 * window.r_max_window
    found: dict[tuple, CriticalPoint] = {}
    for p in range(len(cloud)):
        nbrs = [int(q) for q in ball_indices(index, cloud.points[p], reach) if q > p]
        for m in sizes:
            for rest in itertools.combinations(nbrs, m - 1):
                X = (p,) + rest
                pts = cloud.points[list(X)]
                for off in _lift_choices(pts):
                    if _pairwise_max(off) > reach + TOL_GEO:
                        continue
                    lifted = pts[0] + off
                    c, radius, bary, cond = circumspheres(lifted[None])
                    if not window.contains(float(radius[0])):
                        continue
                    try:
                        cp = classify_subset(X, cloud, index, k, anchor=c[0])
                    except (Degenerate, Marginal, DiameterTooLarge) as exc:
                        raise DegenerateTrial(f"subset {X}: {exc}") from exc
                    if cp is None or not window.contains(cp.rho):
                        continue
                    if window.mu_filter is not None and cp.index_mu != window.mu_filter:
                        continue
                    found.setdefault(cp.key(), cp)
    return sorted(found.values(), key=lambda c: (c.rho, c.generators))


def _pairwise_max(off: np.ndarray) -> float:
    diff = off[:, None, :] - off[None, :, :]
    return float(np.sqrt(np.max(np.sum(diff * diff, axis=-1))))


# --------------------------------------------------------------------------
# localized vectorized enumeration

BASE_CELLS = 16
MAX_LEVEL_CELLS = 1 << 16
ANNULUS_TARGET = 4.0
ANNULUS_MAX = 14
ROW_CHUNK = 200_000


@lru_cache(maxsize=None)
def _combos(a: int, m: int) -> np.ndarray:
    return np.array(list(itertools.combinations(range(a), m)), dtype=np.intp).reshape(-1, m)


def _sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def _grid_centers(M: int, d: int) -> np.ndarray:
    ax = (np.arange(M) + 0.5) / M
    mesh = np.meshgrid(*([ax] * d), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def _children(centers: np.ndarray, M: int) -> np.ndarray:
    d = centers.shape[1]
    q = 0.25 / M
    shifts = np.array(list(itertools.product((-q, q), repeat=d)))
    return (centers[:, None, :] + shifts[None, :, :]).reshape(-1, d)


def _balls(index: SpatialIndex, centers: np.ndarray, radii: np.ndarray, k0: int):
    """Padded neighbor lists: all points within ``radii`` of each center.

    Returns (idx, dist) of shape (B, K) sorted by distance, padded with -1/inf.
    """
    n = len(index)
    B = centers.shape[0]
    K = min(max(k0, 1), n)
    rows = np.arange(B)
    out_idx, out_dist, out_rows = [], [], []
    while rows.size:
        dist, idx = index.tree.query(centers[rows], k=K)
        dist = np.asarray(dist).reshape(rows.size, K)
        idx = np.asarray(idx).reshape(rows.size, K)
        done = (K >= n) | (dist[:, -1] > radii[rows])
        out_idx.append(idx[done])
        out_dist.append(dist[done])
        out_rows.append(rows[done])
        rows = rows[~done]
        K = min(2 * K, n)
    Kmax = max(a.shape[1] for a in out_idx)
    idx = np.full((B, Kmax), -1, dtype=np.intp)
    dist = np.full((B, Kmax), np.inf)
    for r, a, b in zip(out_rows, out_idx, out_dist):
        idx[r, : a.shape[1]] = a
        dist[r, : b.shape[1]] = b
    outside = dist > radii[:, None]
    idx[outside] = -1
    dist[outside] = np.inf
    return idx, dist


def enumerate_critical_points(cloud: PointCloud, k: int, window: EnumerationWindow,
                              index: SpatialIndex | None = None) -> list[CriticalPoint]:
    """All critical points of the k-NN distance function with value in the window.

    The torus is covered by dyadic cubes.  For a cube with center v,
    half-diagonal delta and f = d_k(v), every critical point c inside the cube
    has |rho_c - f| <= delta (d_k is 1-Lipschitz), so cubes whose value range
    misses the window are discarded, and the generators of c lie in the
    annulus f - 2 delta <= |p - v| <= f + 2 delta.  Cubes are refined until
    the annulus is sparse; each surviving cube then classifies every subset
    of its annulus and keeps the centers that fall inside it.

    Raises DegenerateTrial when an accepted configuration is ill-conditioned
    or has a sample point on its circumsphere.
    """
    if len(cloud) < k:
        raise ValueError("cloud has fewer than k points")
    d = cloud.dim
    n = len(cloud)
    index = index or build_index(cloud)
    sizes = [m for m in subset_sizes(d, k, window.mu_filter)]
    if not sizes:
        return []
    kappa = _sphere_area(d)

    found: dict[tuple, CriticalPoint] = {}
    M = BASE_CELLS
    cubes = _grid_centers(M, d)
    while cubes.shape[0]:
        half = 0.5 / M
        delta = half * math.sqrt(d)
        f = knn_distances(index, cubes, k)
        keep = (f + delta > window.r_min) & (f - delta <= window.r_max_window)
        cubes, f = cubes[keep], f[keep]
        can_split = 2 * M <= MAX_LEVEL_CELLS
        target = ANNULUS_TARGET / (4.0 * n * kappa * np.maximum(f, 1e-12) ** (d - 1))
        split = (delta > np.minimum(target, 1.0 / 16)) if can_split else np.zeros(len(f), bool)
        leaf_c, leaf_f = cubes[~split], f[~split]
        refine = [cubes[split]]
        if leaf_c.shape[0]:
            over = _classify_cubes(index, k, window, sizes, leaf_c, leaf_f, half, found,
                                   allow_overflow=not can_split)
            if over is not None and over.any():
                refine.append(leaf_c[over])
        nxt = np.concatenate(refine, axis=0)
        cubes = _children(nxt, M) if nxt.shape[0] else nxt
        M *= 2
    return sorted(found.values(), key=lambda c: (c.rho, c.generators))


def _classify_cubes(index, k, window, sizes, centers, f, half, found, allow_overflow):
    """Classify annulus subsets for a batch of same-level cubes.

    Returns a mask of cubes whose annulus was too crowded and must be split.
    """
    d = centers.shape[1]
    delta = half * math.sqrt(d)
    slack = 4 * TOL_GEO
    radii = f + 2 * delta + slack
    idx, dist = _balls(index, centers, radii, k + int(3 * ANNULUS_TARGET) + 2)
    valid = idx >= 0
    cand = valid & (dist >= f[:, None] - 2 * delta - slack)
    a = cand.sum(axis=1)
    over = a > ANNULUS_MAX
    if allow_overflow:
        over[:] = False
    # candidate columns first, then the rest of the ball
    order = np.argsort(~cand, axis=1, kind="stable")
    idx = np.take_along_axis(idx, order, axis=1)
    pts = index.points
    off = np.where(idx[..., None] >= 0, wrap(pts[idx] - centers[:, None, :]), np.nan)

    for a_val in np.unique(a[~over]):
        rows = np.flatnonzero((a == a_val) & ~over)
        for m in sizes:
            if m > a_val:
                continue
            combos = _combos(int(a_val), m)
            per = max(1, ROW_CHUNK // max(1, len(combos)))
            for s in range(0, rows.size, per):
                _classify_batch(rows[s:s + per], combos, idx, off, centers, f, half,
                                k, window, found)
    return over


def _classify_batch(rows, combos, idx, off, centers, f, half, k, window, found):
    m = combos.shape[1]
    R, C = rows.size, combos.shape[0]
    sub_cols = np.broadcast_to(combos, (R, C, m)).reshape(-1, m)
    sub_rows = np.repeat(rows, C)
    lifted = off[sub_rows[:, None], sub_cols]  # (R*C, m, d)
    c, radius, bary, cond = circumspheres(lifted)
    with np.errstate(invalid="ignore"):
        ok = (radius > window.r_min) & (radius <= window.r_max_window)
        ok &= np.all((c >= -half) & (c < half), axis=1)
        ok &= np.all(bary > TOL_BARY, axis=1)
        # a critical value in the cube lies within the half diagonal of f
        # (d_k is 1-Lipschitz); larger spheres would be judged on a truncated ball
        ok &= np.abs(radius - f[sub_rows]) <= half * math.sqrt(c.shape[1]) + 4 * TOL_GEO
    if not ok.any():
        return
    sel = np.flatnonzero(ok)
    c, radius, cond = c[sel], radius[sel], cond[sel]
    sub_rows, sub_cols = sub_rows[sel], sub_cols[sel]
    ball = off[sub_rows]  # (S, K, d)
    dd = np.sqrt(np.sum((ball - c[:, None, :]) ** 2, axis=-1))
    gen_mask = np.zeros(dd.shape, dtype=bool)
    np.put_along_axis(gen_mask, sub_cols, True, axis=1)
    other = ~gen_mask & np.isfinite(dd)
    interior = np.sum(other & (dd < radius[:, None] - TOL_GEO), axis=1)
    is_crit = (interior >= k - m) & (interior <= k - 1)
    if window.mu_filter is not None:
        is_crit &= (m + interior - k) == window.mu_filter
    if not is_crit.any():
        return
    band = np.any(other & (np.abs(dd - radius[:, None]) <= TOL_GEO), axis=1)
    for s in np.flatnonzero(is_crit):
        r = sub_rows[s]
        gens = idx[r, sub_cols[s]]
        if band[s]:
            raise DegenerateTrial(f"generators {sorted(gens.tolist())}: sample point on sphere")
        if not cond[s] <= COND_MAX:
            raise DegenerateTrial(f"generators {sorted(gens.tolist())}: condition {cond[s]:.3g}")
        cp = _make_point(centers[r] + c[s], radius[s], m, int(interior[s]), k, gens)
        found.setdefault(cp.key(), cp)


# --------------------------------------------------------------------------


def count_by_index(crits: Iterable[CriticalPoint], mu: int, r: float,
                   window: EnumerationWindow | None = None) -> int:
    """Number of index-mu critical points with rho >= r."""
    if window is not None and r < window.r_min:
        raise ValueError(f"r={r} is below the enumeration window ({window.r_min}, ...]")
    return sum(1 for c in crits if c.index_mu == mu and c.rho >= r)


def write_jsonl(crits: Iterable[CriticalPoint], fh: IO[str]) -> None:
    for c in crits:
        fh.write(json.dumps(c.to_dict()) + "\n")


def read_jsonl(fh: IO[str]) -> list[CriticalPoint]:
    return [CriticalPoint.from_dict(json.loads(ln)) for ln in fh if ln.strip()]
