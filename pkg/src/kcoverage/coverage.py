"""k-coverage decisions and vacancy components.

Two independent routes:

* :func:`is_covered_morse` uses the fact that the torus is k-covered at
  radius r exactly when the k-NN distance function has no local maximum
  above r.
* :func:`is_covered_grid` and :func:`vacancy_components` evaluate the k-NN
  distance function on grid nodes and use its 1-Lipschitz property to turn
  node values into certified statements about whole cells.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .critical import CriticalPoint, EnumerationWindow, enumerate_critical_points
from .errors import OutOfRegime
from .knn import SpatialIndex, build_index, knn_distances
from .pointcloud import PointCloud
from .torus import R_CONV

GRID_CHUNK = 1 << 18
MAX_REFINE = 12


class Covered(str, Enum):
    YES = "yes"
    NO = "no"
    MARGINAL = "marginal"


@dataclass(frozen=True)
class CoverageVerdict:
    covered: Covered
    method: str  # "morse" or "grid"
    witness: CriticalPoint | np.ndarray | None = None

    def __post_init__(self):
        if (self.witness is not None) != (self.covered is Covered.NO):
            raise ValueError("witness must be present exactly when covered == no")

    @property
    def witness_location(self) -> np.ndarray | None:
        if isinstance(self.witness, CriticalPoint):
            return self.witness.center
        return self.witness

    def to_dict(self) -> dict:
        w = self.witness
        if isinstance(w, CriticalPoint):
            w = w.to_dict()
        elif w is not None:
            w = {"location": [float(x) for x in w]}
        return {"covered": self.covered.value, "method": self.method, "witness": w}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass
class VacancyReport:
    component_count: int
    components: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"component_count": self.component_count,
                "components": [{"cells": c["cells"].tolist(), "area": c["area"]}
                               for c in self.components]}


def _grid(M: int, d: int) -> np.ndarray:
    ax = (np.arange(M) + 0.5) / M
    mesh = np.meshgrid(*([ax] * d), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def _eval(index: SpatialIndex, nodes: np.ndarray, k: int) -> np.ndarray:
    out = np.empty(nodes.shape[0])
    for s in range(0, nodes.shape[0], GRID_CHUNK):
        out[s:s + GRID_CHUNK] = knn_distances(index, nodes[s:s + GRID_CHUNK], k)
    return out


def _subdivide(nodes: np.ndarray, side: float) -> np.ndarray:
    d = nodes.shape[1]
    q = side / 4
    shifts = np.array(list(itertools.product((-q, q), repeat=d)))
    return (nodes[:, None, :] + shifts[None]).reshape(-1, d) % 1.0


def lipschitz_max_above(index: SpatialIndex, k: int, level: float, side0: float,
                        max_refine: int = MAX_REFINE):
    """Decide whether max d_k exceeds ``level`` by Lipschitz branch-and-bound.

    Returns (answer, witness): answer is True with a node whose value exceeds
    ``level``, False when every cell is certified at or below it, or None
    when the refinement budget ran out.
    """
    d = index.cloud.dim
    M = max(1, int(math.ceil(1.0 / side0)))
    side = 1.0 / M
    nodes = _grid(M, d)
    for _ in range(max_refine + 1):
        f = _eval(index, nodes, k)
        hit = np.flatnonzero(f > level)
        if hit.size:
            return True, nodes[hit[np.argmax(f[hit])]]
        open_ = f + side * math.sqrt(d) / 2 > level
        if not open_.any():
            return False, None
        nodes = _subdivide(nodes[open_], side)
        side /= 2
    return None, None


def is_covered_grid(cloud: PointCloud, k: int, r: float, h: float | None = None,
                    index: SpatialIndex | None = None,
                    max_refine: int = MAX_REFINE) -> CoverageVerdict:
    """Coverage from grid values of d_k at spacing <= h (default r/16).

    A node with value above r is an uncovered witness.  A cell whose node
    value is at most r - (half diagonal) is covered.  Cells in between are
    subdivided up to ``max_refine`` times before the verdict is marginal.
    """
    if h is None:
        h = r / 16
    if h > r / 8:
        raise ValueError("grid spacing must be <= r/8")
    index = index or build_index(cloud)
    if len(cloud) < k:
        return CoverageVerdict(Covered.NO, "grid", np.zeros(cloud.dim))
    above, node = lipschitz_max_above(index, k, r, h, max_refine)
    if above is None:
        return CoverageVerdict(Covered.MARGINAL, "grid")
    if above:
        return CoverageVerdict(Covered.NO, "grid", node)
    return CoverageVerdict(Covered.YES, "grid")


def certify_regime(index: SpatialIndex, k: int, level: float = R_CONV) -> None:
    """Raise OutOfRegime if some grid node has d_k above ``level`` (>= 1/4).

    A maximum sitting within the refinement resolution of ``level`` is
    accepted as in-regime.
    """
    above, _ = lipschitz_max_above(index, k, max(level, R_CONV), 1.0 / 32, max_refine=8)
    if above:
        raise OutOfRegime("k-NN distance exceeds 1/4; vacancy persists at r_conv")


def is_covered_morse(cloud: PointCloud, k: int, r: float,
                     index: SpatialIndex | None = None) -> CoverageVerdict:
    """Covered iff no index-d critical point has critical value in (r, 1/4].

    For r >= 1/4 the window is empty and the verdict rests on the regime
    check alone.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    if len(cloud) < k:
        raise ValueError("cloud has fewer than k points")
    index = index or build_index(cloud)
    certify_regime(index, k, r)
    if r >= R_CONV:
        return CoverageVerdict(Covered.YES, "morse")
    window = EnumerationWindow(r, R_CONV, mu_filter=cloud.dim)
    maxima = enumerate_critical_points(cloud, k, window, index)
    if maxima:
        return CoverageVerdict(Covered.NO, "morse", max(maxima, key=lambda c: c.rho))
    return CoverageVerdict(Covered.YES, "morse")


def is_covered(cloud: PointCloud, k: int, r: float,
               index: SpatialIndex | None = None) -> CoverageVerdict:
    """Morse decision, deferring to the grid oracle outside its validity regime."""
    index = index or build_index(cloud)
    try:
        return is_covered_morse(cloud, k, r, index)
    except OutOfRegime:
        return is_covered_grid(cloud, k, r, index=index)


def _vacant_leaves(index: SpatialIndex, k: int, r: float, M: int, depth: int):
    """Quadtree cells (level, integer index, witness) covering {d_k > r}.

    A cell is dropped when certified covered (value + half diagonal <= r),
    kept whole when certified vacant (value - half diagonal > r), and split
    otherwise.  Undecided cells at the depth limit are kept, so the union is
    an outer approximation; ``witness`` marks cells whose node value exceeds r.
    """
    d = index.cloud.dim
    shifts = np.array(list(itertools.product((0, 1), repeat=d)), dtype=np.int64)
    cells = np.array(list(itertools.product(range(M), repeat=d)), dtype=np.int64).reshape(-1, d)
    leaves = []
    for level in range(depth + 1):
        if cells.shape[0] == 0:
            break
        side = 1.0 / (M << level)
        hd = side * math.sqrt(d) / 2
        f = _eval(index, (cells + 0.5) * side, k)
        open_ = f + hd > r
        keep = f - hd > r
        if level == depth:
            keep = open_
        if keep.any():
            leaves.append((level, cells[keep], f[keep] > r))
        cells = (2 * cells[open_ & ~keep][:, None, :] + shifts[None]).reshape(-1, d)
    return leaves


def _touching(lo_a, sa, lo_b, sb, units, d):
    delta = (lo_b - lo_a) % units  # start of b relative to start of a
    end_b = (delta + sb) % units
    overlap = (delta < sa) | (delta + sb > units)
    touch = (delta == sa) | (end_b == 0)
    return (touch.sum(axis=1) == 1) & (overlap.sum(axis=1) == d - 1) & np.all(touch | overlap, axis=1)


def _leaf_components(leaves, M: int, depth: int, d: int):
    """Face-adjacency labels of quadtree leaves on the periodic grid."""
    units = M << depth
    lo = np.concatenate([c << (depth - lev) for lev, c, _ in leaves]).astype(np.int64)
    size = np.concatenate([np.full(len(c), 1 << (depth - lev), dtype=np.int64)
                           for lev, c, _ in leaves])
    n = len(lo)
    centers = ((lo + size[:, None] / 2.0) / units) % 1.0
    groups = []
    start = 0
    for lev, c, _ in leaves:
        groups.append((np.arange(start, start + len(c)), cKDTree(centers[start:start + len(c)], boxsize=1.0)))
        start += len(c)
    rows, cols = [], []
    for ga, (ia, ta) in enumerate(groups):
        for ib, tb in groups[ga:]:
            reach = (size[ia[0]] + size[ib[0]]) / 2.0 / units * math.sqrt(d) * 1.0001
            sdm = ta.sparse_distance_matrix(tb, min(reach, 0.49), output_type="ndarray")
            if len(sdm) == 0:
                continue
            a, b = ia[sdm["i"]], ib[sdm["j"]]
            adj = _touching(lo[a], size[a][:, None], lo[b], size[b][:, None], units, d)
            rows.append(a[adj])
            cols.append(b[adj])
    a = np.concatenate(rows) if rows else np.zeros(0, dtype=int)
    b = np.concatenate(cols) if cols else np.zeros(0, dtype=int)
    graph = coo_matrix((np.ones(len(a)), (a, b)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    return labels, lo, size


def vacancy_components(cloud: PointCloud, k: int, r: float, h: float | None = None,
                       index: SpatialIndex | None = None,
                       max_refine: int = 10) -> VacancyReport:
    """Connected components of the vacancy {d_k > r}.

    Starts from a periodic grid of spacing <= h and refines undecided cells
    up to ``max_refine`` times.  Undecided cells at the finest level are
    flood-filled together with vacant ones (face adjacency, torus wrap) and
    a component counts only if it contains a node with value above r.
    Components closer than a finest cell can merge; components whose
    inscribed radius is below the finest half diagonal can be missed.
    """
    if h is None:
        h = r / 16
    if h > r / 8:
        raise ValueError("grid spacing must be <= r/8")
    d = cloud.dim
    M = int(math.ceil(1.0 / h))
    if len(cloud) < k:
        return VacancyReport(1, [{"cells": np.zeros((1, d + 1), dtype=np.int64), "area": 1.0}])
    index = index or build_index(cloud)
    leaves = _vacant_leaves(index, k, r, M, max_refine)
    if not leaves:
        return VacancyReport(0, [])
    labels, lo, size = _leaf_components(leaves, M, max_refine, d)
    witness = np.concatenate([w for _, _, w in leaves])
    units = M << max_refine
    comps = []
    # components without a node above r are boundary slivers of covered space
    for lab in np.unique(labels[witness]):
        sel = labels == lab
        cells = np.concatenate([lo[sel], size[sel][:, None]], axis=1)
        comps.append({"cells": cells, "area": float(np.sum((size[sel] / units) ** d))})
    comps.sort(key=lambda c: -c["area"])
    return VacancyReport(component_count=len(comps), components=comps)
