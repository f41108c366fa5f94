"""The marked point process of maxima in the critical window.

With Lambda = n omega_d r^d, the window is

    Lambda0 = log n + (d+k-2) log log n + lambda0,

and every index-d critical point c with rho_c in (r0, sqrt(r0)] carries the
mark lambda_c = n omega_d rho_c^d - log n - (d+k-2) log log n.  In the limit
these pairs form a Poisson process with intensity C_d e^{-lambda} dlambda dc.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .coverage import certify_regime
from .critical import EnumerationWindow, enumerate_critical_points
from .errors import ConfigError, DegenerateTrial, InsufficientTrials, OutOfRegime
from .knn import build_index
from .pointcloud import PointCloud, SeedSpec, sample_poisson
from .torus import R_CONV, ball_volume

MIN_TRIALS = 500


@dataclass(frozen=True)
class WindowConfig:
    n: float
    d: int
    k: int
    lambda0: float = 0.0

    def __post_init__(self):
        if self.n < 3:
            raise ConfigError("n must be >= 3 so that log log n > 0")
        if self.d < 1 or self.k < 1:
            raise ConfigError("d and k must be >= 1")
        if not self.r0 < self.R0 <= R_CONV:
            raise ConfigError(f"window (r0, R0] = ({self.r0:.4g}, {self.R0:.4g}] "
                              f"is not inside (0, {R_CONV}]")

    @property
    def log_term(self) -> float:
        return math.log(self.n) + (self.d + self.k - 2) * math.log(math.log(self.n))

    @property
    def Lambda(self) -> float:
        return self.log_term + self.lambda0

    @property
    def r0(self) -> float:
        return radius_for_Lambda(self.Lambda, self.n, self.d)

    @property
    def R0(self) -> float:
        return math.sqrt(self.r0)

    def mark(self, rho):
        return self.n * ball_volume(self.d) * np.asarray(rho) ** self.d - self.log_term

    @property
    def mark_max(self) -> float:
        """Mark of a maximum at the outer window edge R0 (the KS truncation point)."""
        return float(self.mark(self.R0))


def radius_for_Lambda(Lambda: float, n: float, d: int) -> float:
    if Lambda <= 0:
        raise ConfigError("Lambda must be positive")
    return (Lambda / (n * ball_volume(d))) ** (1.0 / d)


@dataclass(frozen=True)
class MarkedPoint:
    location: np.ndarray
    mark: float
    rho: float


def collect_xi(cloud: PointCloud, cfg: WindowConfig, index=None) -> list[MarkedPoint]:
    """Index-d critical points with rho in (r0, R0], with their marks."""
    if cloud.dim != cfg.d:
        raise ConfigError("cloud dimension does not match the window")
    crits = enumerate_critical_points(cloud, cfg.k, EnumerationWindow(cfg.r0, cfg.R0, cfg.d),
                                      index)
    return [MarkedPoint(c.center, float(cfg.mark(c.rho)), c.rho) for c in crits]


@dataclass
class WindowTrial:
    trial_id: int
    points: list[MarkedPoint] | None  # None for a degenerate trial
    covered: bool | None  # k-covered at r0; None if undecided
    beyond_window: int = 0  # maxima in (R0, 1/4]


def window_trial(cfg: WindowConfig, seed: SeedSpec) -> WindowTrial:
    """One Poisson sample: its marked maxima and whether it is covered at r0.

    Coverage at r0 means no maximum in (r0, 1/4] together with the regime
    check that d_k stays below 1/4 everywhere.
    """
    cloud = sample_poisson(cfg.n, cfg.d, seed)
    try:
        index = build_index(cloud)
        crits = enumerate_critical_points(cloud, cfg.k,
                                          EnumerationWindow(cfg.r0, R_CONV, cfg.d), index)
    except DegenerateTrial:
        return WindowTrial(seed.trial_id, None, None)
    inside = [c for c in crits if c.rho <= cfg.R0]
    pts = [MarkedPoint(c.center, float(cfg.mark(c.rho)), c.rho) for c in inside]
    covered: bool | None = not crits
    if covered:
        try:
            certify_regime(index, cfg.k)
        except OutOfRegime:
            covered = None
    return WindowTrial(seed.trial_id, pts, covered, len(crits) - len(inside))


def run_window(cfg: WindowConfig, trials: int, master_seed: int) -> list[WindowTrial]:
    return [window_trial(cfg, SeedSpec(master_seed, t)) for t in range(trials)]


def upper_gamma(a: float, x):
    """Non-normalized upper incomplete gamma Gamma(a, x)."""
    return special.gammaincc(a, x) * special.gamma(a)


def finite_n_mean(C: float, cfg: WindowConfig) -> float:
    """Expected number of window maxima at finite n for constant C.

    The first-moment computation gives C n (Gamma(a, Lambda0) - Gamma(a, Lambda(R0)))
    with a = d + k - 1; it tends to C e^{-lambda0} as n grows.
    """
    a = cfg.d + cfg.k - 1
    hi = cfg.log_term + cfg.mark_max
    return float(C * cfg.n * (upper_gamma(a, cfg.Lambda) - upper_gamma(a, hi)))


def finite_n_mark_cdf(x, cfg: WindowConfig):
    """Finite-n law of (mark - lambda0): density proportional to Lambda^{a-1} e^{-Lambda}."""
    a = cfg.d + cfg.k - 1
    lo = cfg.Lambda
    hi = cfg.log_term + cfg.mark_max
    x = np.asarray(x, dtype=float)
    num = upper_gamma(a, lo) - upper_gamma(a, np.clip(lo + x, lo, hi))
    return num / (upper_gamma(a, lo) - upper_gamma(a, hi))


@dataclass
class GofReport:
    trial_count: int
    counts: dict
    dispersion: float
    chi2_counts: float
    chi2_counts_p: float
    ks_stat_marks: float
    ks_p_marks: float
    chi2_spatial: float
    chi2_spatial_p: float
    c_hat: float
    c_hat_se: float
    truncation: float
    n_truncated: int
    ks_stat_finite_n: float = float("nan")
    ks_p_finite_n: float = float("nan")
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["counts"] = {str(key): v for key, v in self.counts.items()}
        return out


def _count_bins(counts: np.ndarray, mean: float):
    obs = np.array([np.sum(counts == 0), np.sum(counts == 1), np.sum(counts == 2),
                    np.sum(counts >= 3)], dtype=float)
    pmf = stats.poisson.pmf([0, 1, 2], mean)
    probs = np.append(pmf, 1.0 - pmf.sum())
    return obs, probs * len(counts)


def gof_poisson(samples: list[list[MarkedPoint]], cfg: WindowConfig) -> GofReport:
    """Goodness of fit of window maxima against the Poisson limit.

    Counts are tested against Poisson(c_hat) on bins {0, 1, 2, >=3} (one
    fitted parameter), marks minus lambda0 by KS against Exp(1) and
    locations by chi-square over 4^d equal cells.
    """
    if len(samples) < MIN_TRIALS:
        raise InsufficientTrials(f"need >= {MIN_TRIALS} trials, got {len(samples)}")
    counts = np.array([len(s) for s in samples])
    mean = counts.mean()
    if mean == 0:
        raise ValueError("every trial is empty; dispersion is undefined")
    dispersion = counts.var(ddof=1) / mean
    obs, exp = _count_bins(counts, mean)
    chi2_c, p_c = stats.chisquare(obs, exp, ddof=1)

    marks = np.array([p.mark for s in samples for p in s]) - cfg.lambda0
    trunc = cfg.mark_max - cfg.lambda0
    kept = marks[marks <= trunc]
    ks = stats.kstest(kept, "expon")
    ks_fn = stats.kstest(kept, lambda x: finite_n_mark_cdf(x, cfg))

    locs = np.array([p.location for s in samples for p in s]).reshape(-1, cfg.d)
    cell = np.minimum((locs * 4).astype(int), 3)
    flat = np.ravel_multi_index(cell.T, (4,) * cfg.d) if len(locs) else np.zeros(0, int)
    occ = np.bincount(flat, minlength=4 ** cfg.d)
    chi2_s, p_s = stats.chisquare(occ)

    hist = {int(c): int(v) for c, v in zip(*np.unique(counts, return_counts=True))}
    return GofReport(
        trial_count=len(samples), counts=hist, dispersion=float(dispersion),
        chi2_counts=float(chi2_c), chi2_counts_p=float(p_c),
        ks_stat_marks=float(ks.statistic), ks_p_marks=float(ks.pvalue),
        chi2_spatial=float(chi2_s), chi2_spatial_p=float(p_s),
        c_hat=float(mean), c_hat_se=float(counts.std(ddof=1) / math.sqrt(len(counts))),
        truncation=float(trunc), n_truncated=int(len(marks) - len(kept)),
        ks_stat_finite_n=float(ks_fn.statistic), ks_p_finite_n=float(ks_fn.pvalue))


def coverage_probability_check(n: float, d: int, k: int, lambda0s, trials: int,
                               master_seed: int, c_hat: float | None = None,
                               runs: dict | None = None) -> list[dict]:
    """Empirical P(covered at r0) per lambda0 against exp(-c_hat e^{-lambda0}).

    ``c_hat`` defaults to the pooled mean count at lambda0 = 0, which is then
    run first.  Precomputed runs can be passed in ``runs`` keyed by lambda0.
    """
    runs = dict(runs or {})

    def get(l0):
        if l0 not in runs:
            runs[l0] = run_window(WindowConfig(n, d, k, l0), trials, master_seed)
        return runs[l0]

    if c_hat is None:
        ok = [t for t in get(0.0) if t.points is not None]
        c_hat = float(np.mean([len(t.points) for t in ok]))
    rows = []
    for l0 in lambda0s:
        decided = [t.covered for t in get(l0) if t.covered is not None]
        p = float(np.mean(decided)) if decided else float("nan")
        se = math.sqrt(p * (1 - p) / len(decided)) if decided else float("nan")
        rows.append({"lambda0": float(l0), "p_covered": p, "se": se,
                     "predicted": math.exp(-c_hat * math.exp(-l0)),
                     "trials": len(decided)})
    return rows
