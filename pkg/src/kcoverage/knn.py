"""Exact k-NN distances and open-ball counts on the torus.

The index is a periodic k-d tree (``scipy.spatial.cKDTree`` with
``boxsize=1``).  Returned distances are recomputed with
:func:`kcoverage.torus.torus_distances` so they agree bit-for-bit with a
brute-force scan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import InsufficientPoints, Marginal
from .pointcloud import PointCloud
from .torus import TOL_GEO, torus_distances


@dataclass(frozen=True)
class SpatialIndex:
    cloud: PointCloud
    cell_size: float
    tree: cKDTree

    @property
    def points(self) -> np.ndarray:
        return self.cloud.points

    def __len__(self) -> int:
        return len(self.cloud)


def default_cell_size(n: float, d: int, k: int = 1) -> float:
    return min(0.25, (k / max(n, 1.0)) ** (1.0 / d))


def build_index(cloud: PointCloud, cell_size: float | None = None) -> SpatialIndex:
    """Build the index; ``cell_size`` must lie in (0, 1/4] and sets the tree leaf size."""
    if cell_size is None:
        cell_size = default_cell_size(len(cloud), cloud.dim)
    if not 0.0 < cell_size <= 0.25:
        raise ValueError(f"cell_size must be in (0, 1/4], got {cell_size}")
    expected_per_cell = max(1, int(round(len(cloud) * cell_size ** cloud.dim)))
    tree = cKDTree(cloud.points, leafsize=max(8, min(expected_per_cell, 64)),
                   boxsize=1.0, balanced_tree=False, compact_nodes=False)
    return SpatialIndex(cloud=cloud, cell_size=float(cell_size), tree=tree)


def knn_distances(index: SpatialIndex, X, k: int) -> np.ndarray:
    """k-th nearest neighbor distance from every row of X (shape (q, d))."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) < k:
        raise InsufficientPoints(f"cloud has {len(index)} points, need k={k}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        return np.zeros(0)
    _, idx = index.tree.query(X, k=k)
    idx = np.asarray(idx).reshape(X.shape[0], k)
    nb = index.points[idx]  # (q, k, d)
    dist = torus_distances(nb, X[:, None, :])
    return np.max(dist, axis=1)


def knn_distance(index: SpatialIndex, x, k: int) -> float:
    return float(knn_distances(index, np.atleast_1d(np.asarray(x, dtype=float))[None, :], k)[0])


def ball_indices(index: SpatialIndex, c, radius: float) -> np.ndarray:
    """Indices of all points within closed distance ``radius`` (plus tolerance) of c."""
    if len(index) == 0:
        return np.zeros(0, dtype=int)
    c = np.atleast_1d(np.asarray(c, dtype=float))
    idx = index.tree.query_ball_point(c, radius + 2 * TOL_GEO)
    return np.sort(np.asarray(idx, dtype=int))


def count_in_ball(index: SpatialIndex, c, rho: float, exclude=()) -> int:
    """Number of points strictly inside the open ball B_rho(c), ignoring ``exclude``.

    Raises Marginal if a non-excluded point is within TOL_GEO of the sphere.
    """
    if not 0.0 < rho <= 0.25:
        raise ValueError(f"rho must be in (0, 1/4], got {rho}")
    idx = ball_indices(index, c, rho)
    if idx.size == 0:
        return 0
    excl = np.fromiter((int(i) for i in exclude), dtype=int)
    if excl.size:
        idx = idx[~np.isin(idx, excl)]
    dist = torus_distances(index.points[idx], np.asarray(c, dtype=float))
    if np.any(np.abs(dist - rho) <= TOL_GEO):
        raise Marginal(f"a point lies within {TOL_GEO:g} of the sphere of radius {rho}")
    return int(np.count_nonzero(dist < rho - TOL_GEO))
