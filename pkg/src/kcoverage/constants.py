"""Monte Carlo estimate of the window constant C_d.

C_d is an integral over (d+1)-tuples of unit vectors theta of
h_crit(theta) * V_simp(theta), where h_crit says the origin (the
circumcenter) lies in the open simplex of theta and V_simp is its volume.
Sampling theta uniformly on (S^{d-1})^{d+1} estimates the integral divided
by kappa_d^{d+1}, kappa_d = d * omega_d the surface measure of S^{d-1}.

Two normalizations of the prefactor are offered:

* ``"mecke"`` (default): D_bp / (d omega_d^d (d+1)! (k-1)!), which keeps
  the 1/(d+1)! from summing over unordered (d+1)-subsets and the
  (n omega_d rho^d)^{k-1} / (k-1)! Poisson weight of the k-1 interior points.
  It gives C = 1/(k-1)! for d = 1 and C = 1 for d = 2, k = 1.
* ``"printed"``: D_bp / (d omega_d^{d+k-1}), the prefactor as usually quoted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pointcloud import SeedSpec
from .torus import ball_volume, sphere_area

BATCH = 1 << 16
MIN_SAMPLES = 100_000


@dataclass(frozen=True)
class ConstantEstimate:
    value: float
    std_error: float
    samples: int
    d: int
    k: int
    normalization: str = "mecke"

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def bp_constant(d: int, m: int) -> float:
    """D_bp = ((m-1)!)^{d-m+2} Gamma_{d,m-1}; only m = d+1 (Gamma_{d,d} = 1) is supported."""
    if m != d + 1:
        raise NotImplementedError("only full-dimensional simplices (m = d+1) are supported")
    return float(math.factorial(m - 1) ** (d - m + 2))


def prefactor(d: int, k: int, normalization: str = "mecke") -> float:
    """Multiplier turning the sample mean of h_crit * V_simp into C_d."""
    w = ball_volume(d)
    base = bp_constant(d, d + 1) * sphere_area(d) ** (d + 1)
    if normalization == "mecke":
        return base / (d * w ** d * math.factorial(d + 1) * math.factorial(k - 1))
    if normalization == "printed":
        return base / (d * w ** (d + k - 1))
    raise ValueError(f"unknown normalization {normalization!r}")


def _random_rotations(rng: np.random.Generator, B: int, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((B, d, d)))
    return q * np.sign(np.diagonal(r, axis1=1, axis2=2))[:, None, :]


def hv_samples(rng: np.random.Generator, B: int, d: int, rotate: bool = False) -> np.ndarray:
    """B draws of h_crit(theta) * V_simp(theta) with theta uniform on (S^{d-1})^{d+1}."""
    theta = rng.standard_normal((B, d + 1, d))
    theta /= np.linalg.norm(theta, axis=2, keepdims=True)
    if rotate:
        theta = np.einsum("bij,bmj->bmi", _random_rotations(rng, B, d), theta)
    # barycentric coordinates of the origin
    A = np.concatenate([np.swapaxes(theta, 1, 2), np.ones((B, 1, d + 1))], axis=1)
    rhs = np.zeros((B, d + 1, 1))
    rhs[:, d, 0] = 1.0
    det = np.linalg.det(A)
    ok = np.abs(det) > 1e-14
    A[~ok] = np.eye(d + 1)
    bary = np.linalg.solve(A, rhs)[..., 0]
    inside = ok & np.all(bary > 0, axis=1)
    edges = theta[:, 1:, :] - theta[:, :1, :]
    vol = np.abs(np.linalg.det(edges)) / math.factorial(d)
    return np.where(inside, vol, 0.0)


def estimate_Cd(d: int, k: int, samples: int, seed: SeedSpec, rotate: bool = False,
                normalization: str = "mecke") -> ConstantEstimate:
    """Monte Carlo estimate of C_d; batch b uses RNG stream b so the result is reproducible."""
    if samples < MIN_SAMPLES:
        raise ValueError(f"need >= {MIN_SAMPLES} samples")
    if d < 1 or k < 1:
        raise ValueError("d and k must be >= 1")
    factor = prefactor(d, k, normalization)
    if d == 1:
        # S^0 = {-1, +1}: the segment contains 0 iff the signs differ (prob 1/2), length 2
        return ConstantEstimate(factor * 1.0, 0.0, samples, d, k, normalization)
    total = total_sq = 0.0
    done = 0
    for b in range(math.ceil(samples / BATCH)):
        size = min(BATCH, samples - done)
        x = hv_samples(seed.rng(stream=b), size, d, rotate)
        total += float(x.sum())
        total_sq += float((x * x).sum())
        done += size
    mean = total / done
    var = max(total_sq / done - mean * mean, 0.0) * done / (done - 1)
    return ConstantEstimate(factor * mean, factor * math.sqrt(var / done), done, d, k,
                            normalization)
