"""Homogeneous Poisson and binomial point processes on T^d."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .torus import canonicalize

SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    trial_id: int = 0

    def __post_init__(self):
        if self.trial_id < 0:
            raise ValueError("trial_id must be >= 0")

    def rng(self, stream: int = 0) -> np.random.Generator:
        """Independent PCG64 stream; a pure function of (master_seed, trial_id, stream)."""
        ss = np.random.SeedSequence([self.master_seed & SEED_MASK, self.trial_id, stream])
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class PointCloud:
    """Immutable sample on the torus. ``points`` has shape (N, dim) and is read-only."""

    dim: int
    points: np.ndarray
    rate: float | None = None
    seed: int | None = None
    trial_id: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.dim)
        pts = np.ascontiguousarray(canonicalize(pts))
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def shifted(self, v) -> "PointCloud":
        return PointCloud(self.dim, self.points + np.asarray(v, dtype=float),
                          rate=self.rate, seed=self.seed, trial_id=self.trial_id)

    def header(self) -> dict:
        return {"dim": self.dim, "n": self.rate, "seed": self.seed, "trial_id": self.trial_id}


def sample_poisson(n: float, d: int, seed: SeedSpec) -> PointCloud:
    """Poisson process of rate n on the unit torus: N ~ Poisson(n), then N uniform points."""
    if n <= 0:
        raise ValueError("rate must be positive")
    if d < 1:
        raise ValueError("dimension must be >= 1")
    rng = seed.rng()
    count = int(rng.poisson(n))
    pts = rng.random((count, d))
    return PointCloud(d, pts, rate=float(n), seed=seed.master_seed, trial_id=seed.trial_id)


def sample_fixed(count: int, d: int, seed: SeedSpec) -> PointCloud:
    """Exactly ``count`` i.i.d. uniform points."""
    if count < 0:
        raise ValueError("count must be >= 0")
    rng = seed.rng()
    pts = rng.random((count, d))
    return PointCloud(d, pts, seed=seed.master_seed, trial_id=seed.trial_id)


def from_coords(coords: Iterable, d: int) -> PointCloud:
    return PointCloud(d, np.asarray(list(coords), dtype=float).reshape(-1, d))


def write_jsonl(cloud: PointCloud, fh: IO[str]) -> None:
    """Header line, then one JSON array per point at 17 significant digits."""
    fh.write(json.dumps(cloud.header()) + "\n")
    for p in cloud.points:
        fh.write("[" + ", ".join(format(float(x), ".17g") for x in p) + "]\n")


def read_jsonl(fh: IO[str]) -> PointCloud:
    lines = [ln for ln in fh if ln.strip()]
    head = json.loads(lines[0])
    d = int(head["dim"])
    pts = np.array([json.loads(ln) for ln in lines[1:]], dtype=float).reshape(-1, d)
    return PointCloud(d, pts, rate=head.get("n"), seed=head.get("seed"),
                      trial_id=head.get("trial_id"))
