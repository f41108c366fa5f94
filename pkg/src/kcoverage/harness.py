"""Experiment orchestration: sweeps over (n, w, mu), variance checks, oracle comparison."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .coverage import Covered, certify_regime, is_covered_grid, is_covered_morse
from .critical import EnumerationWindow, enumerate_critical_points
from .errors import ConfigError, DegenerateTrial, OutOfRegime
from .knn import build_index
from .pointcloud import SeedSpec, sample_poisson
from .torus import R_CONV
from .window import radius_for_Lambda

SCHEMA_VERSION = 1
DEGENERATE_LIMIT = 1e-3


@dataclass(frozen=True)
class SweepConfig:
    d: int
    k: int
    n_values: tuple
    w_values: tuple
    mu_targets: tuple
    trials: int
    master_seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if any(n < 3 for n in self.n_values):
            raise ConfigError("every n must be >= 3")
        if any(not 0 <= mu <= self.d for mu in self.mu_targets):
            raise ConfigError("mu must lie in 0..d")
        if self.d < 1 or self.k < 1:
            raise ConfigError("d and k must be >= 1")
        for name in ("n_values", "w_values", "mu_targets"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @classmethod
    def from_json(cls, text: str) -> "SweepConfig":
        obj = json.loads(text)
        if obj.pop("schema_version", None) != SCHEMA_VERSION:
            raise ConfigError(f"config must declare schema_version {SCHEMA_VERSION}")
        try:
            return cls(**obj)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    def to_json(self) -> str:
        return json.dumps({"schema_version": SCHEMA_VERSION, **asdict(self)}, indent=2)


def sweep_radius(n: float, d: int, k: int, mu: int, w: float) -> tuple[float, float]:
    """Radius with n omega_d r^d = log n + (mu+k-2) log log n + w."""
    Lam = math.log(n) + (mu + k - 2) * math.log(math.log(n)) + w
    return radius_for_Lambda(Lam, n, d), Lam


@dataclass
class TrialRecord:
    trial_id: int
    seed: int
    point_count: int
    counts: dict | None = None  # mu -> number of critical points with rho in (r, 1/4]
    covered_morse: str | None = None
    covered_grid: str | None = None
    chi: int | None = None
    degenerate: bool = False
    wall_time: float = 0.0


def run_trial(args) -> TrialRecord:
    """One sample at radius r: critical counts per index above r and the Morse verdict."""
    n, d, k, r, master_seed, trial_id = args
    t0 = time.perf_counter()
    seed = SeedSpec(master_seed, trial_id)
    cloud = sample_poisson(n, d, seed)
    rec = TrialRecord(trial_id, master_seed, len(cloud))
    try:
        index = build_index(cloud)
        crits = enumerate_critical_points(cloud, k, EnumerationWindow(r, R_CONV), index)
    except DegenerateTrial:
        rec.degenerate = True
        rec.wall_time = time.perf_counter() - t0
        return rec
    rec.counts = {mu: sum(1 for c in crits if c.index_mu == mu) for mu in range(d + 1)}
    try:
        certify_regime(index, k)
        rec.covered_morse = Covered.NO.value if rec.counts[d] else Covered.YES.value
        rec.chi = -sum((-1) ** c.index_mu * c.delta for c in crits)
    except OutOfRegime:
        rec.covered_morse = None
    rec.wall_time = time.perf_counter() - t0
    return rec


def pmap(fn, items, threads: int = 1):
    """Ordered map, optionally over a process pool."""
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (8 * threads))))


def summarize_counts(counts) -> dict:
    x = np.asarray(counts, dtype=float)
    t = len(x)
    p0 = float(np.mean(x == 0)) if t else float("nan")
    mean = float(x.mean()) if t else float("nan")
    var = float(x.var(ddof=1)) if t > 1 else float("nan")
    return {"trials": t, "p_zero": p0,
            "p_zero_se": math.sqrt(p0 * (1 - p0) / t) if t else float("nan"),
            "mean": mean, "var": var,
            "mean_se": math.sqrt(var / t) if t > 1 else float("nan")}


def run_sweep(cfg: SweepConfig, threads: int = 1, records: list | None = None) -> list[dict]:
    """P(N^mu_{k,r} = 0), mean and variance of N^mu for every (n, w, mu).

    Each configuration uses its own block of trial ids, so rows are
    independent.  Degenerate trials are excluded and counted.
    """
    rows = []
    block = 0
    for n in cfg.n_values:
        for w in cfg.w_values:
            for mu in cfg.mu_targets:
                r, Lam = sweep_radius(n, cfg.d, cfg.k, mu, w)
                if not 0 < r < R_CONV:
                    raise ConfigError(f"radius {r:.4g} for n={n}, w={w} is outside (0, 1/4)")
                ids = range(block * cfg.trials, (block + 1) * cfg.trials)
                block += 1
                recs = pmap(run_trial, [(n, cfg.d, cfg.k, r, cfg.master_seed, t) for t in ids],
                            threads)
                if records is not None:
                    records.extend(recs)
                ok = [x for x in recs if not x.degenerate]
                row = {"n": n, "w": w, "mu": mu, "r": r, "Lambda": Lam,
                       "excluded": len(recs) - len(ok)}
                row.update(summarize_counts([x.counts[mu] for x in ok]))
                rows.append(row)
    return rows


def jackknife_dispersion(counts) -> tuple[float, float]:
    """Variance/mean ratio and its leave-one-out jackknife standard error."""
    x = np.asarray(counts, dtype=float)
    t = len(x)
    if t < 3:
        raise ValueError("need at least 3 trials")
    s1, s2 = x.sum(), (x * x).sum()
    mean = s1 / t
    if mean == 0:
        raise ValueError("mean count is zero")
    ratio = (s2 - t * mean ** 2) / (t - 1) / mean
    m_i = (s1 - x) / (t - 1)
    v_i = (s2 - x * x - (t - 1) * m_i ** 2) / (t - 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        r_i = v_i / m_i
    r_i = r_i[np.isfinite(r_i)]
    se = math.sqrt((len(r_i) - 1) / len(r_i) * np.sum((r_i - r_i.mean()) ** 2))
    return float(ratio), se


def run_variance_check(cfg: SweepConfig, threads: int = 1, min_mean: float = 0.05) -> list[dict]:
    """Sample mean, variance and their ratio (jackknife SE) per configuration."""
    recs: list[TrialRecord] = []
    rows = run_sweep(cfg, threads, records=recs)
    out = []
    for i, row in enumerate(rows):
        chunk = recs[i * cfg.trials:(i + 1) * cfg.trials]
        counts = [x.counts[row["mu"]] for x in chunk if not x.degenerate]
        entry = {k: row[k] for k in ("n", "w", "mu", "trials", "mean", "var")}
        if row["mean"] < min_mean:
            entry.update(ratio=float("nan"), ratio_se=float("nan"))
        else:
            entry["ratio"], entry["ratio_se"] = jackknife_dispersion(counts)
        out.append(entry)
    return out


def oracle_compare(n: float, d: int, k: int, radii, master_seed: int,
                   h_factor: float = 1 / 16) -> list[dict]:
    """Morse versus grid coverage verdict, one instance per radius."""
    rows = []
    for t, r in enumerate(radii):
        cloud = sample_poisson(n, d, SeedSpec(master_seed, t))
        index = build_index(cloud)
        try:
            morse = is_covered_morse(cloud, k, r, index).covered.value
        except (DegenerateTrial, OutOfRegime) as e:
            morse = type(e).__name__
        grid = is_covered_grid(cloud, k, r, h=r * h_factor, index=index).covered.value
        rows.append({"trial_id": t, "r": float(r), "morse": morse, "grid": grid,
                     "agree": morse == grid if grid != Covered.MARGINAL.value else None})
    return rows


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if v is None:
        return ""
    return str(v)


def to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    keys = list(rows[0].keys())
    writer.writerow(keys)
    for row in rows:
        writer.writerow([_fmt(row[key]) for key in keys])
    return buf.getvalue()


def degenerate_overflow(excluded: int, total: int) -> bool:
    return total > 0 and excluded / total > DEGENERATE_LIMIT
