"""Euler characteristic of the k-fold cover via the alternating Morse sum."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .coverage import certify_regime
from .critical import CriticalPoint, EnumerationWindow, enumerate_critical_points
from .errors import DegenerateTrial, OutOfRegime
from .knn import build_index
from .pointcloud import PointCloud, SeedSpec, sample_poisson
from .torus import R_CONV
from .window import radius_for_Lambda


def euler_characteristic(crits: Iterable[CriticalPoint], r: float, k: int | None = None,
                         n_points: int = 0) -> int:
    """chi(B_r^(k)) = sum over critical values <= r of (-1)^mu * Delta_c.

    For k = 1 the sample points themselves are the minima of the distance
    function (critical value 0, one point generator) and are not produced
    by the subset enumeration; pass ``k=1, n_points=len(cloud)`` to add them.
    """
    chi = sum((-1) ** c.index_mu * c.delta for c in crits if c.rho <= r)
    if k == 1:
        chi += n_points
    return int(chi)


def euler_from_vacancy(cloud: PointCloud, k: int, r: float, index=None) -> int:
    """chi(B_r^(k)) from the critical points above r alone.

    When the cover is complete at 1/4, the full alternating sum equals
    chi(T^d) = 0, so the part at or below r is minus the part in (r, 1/4].
    Raises OutOfRegime if d_k exceeds 1/4 somewhere.
    """
    index = index or build_index(cloud)
    certify_regime(index, k)
    if r >= R_CONV:
        return 0
    crits = enumerate_critical_points(cloud, k, EnumerationWindow(r, R_CONV), index)
    return -sum((-1) ** c.index_mu * c.delta for c in crits)


@dataclass
class EulerRow:
    Lambda: float
    r: float
    mean_chi: float
    se: float
    trials: int
    excluded: int
    chis: list


@dataclass
class EulerFit:
    coef: np.ndarray  # A_0 .. A_p
    se: np.ndarray
    points_used: int

    @property
    def A0(self) -> float:
        return float(self.coef[0])

    @property
    def A0_se(self) -> float:
        return float(self.se[0])


def expected_euler_curve(n: float, d: int, k: int, Lambdas, trials: int,
                         master_seed: int) -> list[EulerRow]:
    """Monte Carlo mean of chi(B_r^(k)) at each Lambda = n omega_d r^d.

    Trials are independent across Lambda values (trial ids are offset per
    grid point).  Degenerate or out-of-regime trials are excluded and counted.
    """
    rows = []
    for j, L in enumerate(Lambdas):
        r = radius_for_Lambda(L, n, d)
        chis, bad = [], 0
        for t in range(trials):
            cloud = sample_poisson(n, d, SeedSpec(master_seed, j * trials + t))
            try:
                chis.append(euler_from_vacancy(cloud, k, r))
            except (DegenerateTrial, OutOfRegime):
                bad += 1
        arr = np.array(chis, dtype=float)
        se = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else float("nan")
        rows.append(EulerRow(float(L), r, float(arr.mean()), se, len(arr), bad, chis))
    return rows


def fit_euler_form(rows: list[EulerRow], n: float, degree: int) -> EulerFit:
    """Weighted least squares of mean chi on n e^{-Lambda} (A_0 + A_1 L + ... + A_p L^p).

    Rows with zero standard error (chi identically 0) carry no information
    about the coefficients and are left out.
    """
    use = [r for r in rows if r.se > 0]
    L = np.array([r.Lambda for r in use])
    y = np.array([r.mean_chi for r in use])
    s = np.array([r.se for r in use])
    X = n * np.exp(-L)[:, None] * L[:, None] ** np.arange(degree + 1)[None, :]
    Xw, yw = X / s[:, None], y / s
    coef, *_ = np.linalg.lstsq(Xw, yw, rcond=None)
    cov = np.linalg.inv(Xw.T @ Xw)
    return EulerFit(coef, np.sqrt(np.diag(cov)), len(use))
