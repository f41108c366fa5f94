import math

import numpy as np
import pytest

from kcoverage.coverage import vacancy_components
from kcoverage.critical import EnumerationWindow, enumerate_critical_points
from kcoverage.errors import OutOfRegime
from kcoverage.euler import (EulerRow, euler_characteristic, euler_from_vacancy,
                             expected_euler_curve, fit_euler_form)
from kcoverage.pointcloud import SeedSpec, from_coords, sample_poisson
from kcoverage.window import WindowConfig

from oracles import circle_cover_arcs, circle_gaps, flood_components, knn_field_brute

FULL = EnumerationWindow(0.0, 0.25)


def _circle_cover(points, k, r, M=20000):
    """Mask of {d_k <= r} on a dense grid of the circle."""
    x = (np.arange(M) + 0.5) / M
    return knn_field_brute(np.asarray(points, float).reshape(-1, 1), x[:, None], k) <= r


def _circle_cover_components(points, k, r):
    return flood_components(_circle_cover(points, k, r))


def test_below_smallest_critical_value_is_empty():
    cloud = sample_poisson(200, 2, SeedSpec(1))
    crits = enumerate_critical_points(cloud, 2, FULL)
    r = min(c.rho for c in crits) / 2
    assert euler_characteristic(crits, r) == 0
    # for k = 1 the sample points themselves are the minima
    assert euler_characteristic(enumerate_critical_points(cloud, 1, FULL), 1e-6, k=1,
                                n_points=len(cloud)) == len(cloud)


def test_two_points_on_circle():
    cloud = from_coords([0.0, 0.5], 1)
    # k = 1: two arcs at r = 0.1, the whole circle at r = 0.3
    c1 = enumerate_critical_points(cloud, 1, FULL)
    assert euler_characteristic(c1, 0.1, k=1, n_points=2) == 2 == _circle_cover_components(
        [0.0, 0.5], 1, 0.1)
    assert euler_characteristic(c1, 0.25, k=1, n_points=2) == 0
    # k = 2: B_r is {x within r of both points}, two arcs around 0.25 and 0.75;
    # the index-1 points of d_2 sit at the sample points with value 1/2
    c2 = enumerate_critical_points(cloud, 2, FULL)
    assert euler_characteristic(c2, 0.3) == 2 == _circle_cover_components([0.0, 0.5], 2, 0.3)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_circle_chi_counts_arcs(k):
    rng = np.random.default_rng(k)
    for _ in range(10):
        pts = rng.random(60)
        crits = enumerate_critical_points(from_coords(pts, 1), k, FULL)
        for r in (0.005, 0.01, 0.02, 0.04):
            comps, whole = circle_cover_arcs(pts, k, r)
            chi = euler_characteristic(crits, r, k=k, n_points=60)
            if comps and not whole:
                assert chi == comps


def test_two_routes_agree():
    # sum up to r versus minus the sum above r (cover complete at 1/4)
    for t in range(5):
        cloud = sample_poisson(1500, 2, SeedSpec(3, t))
        crits = enumerate_critical_points(cloud, 2, FULL)
        for r in (0.02, 0.03, 0.04, 0.06):
            assert euler_characteristic(crits, r) == euler_from_vacancy(cloud, 2, r)


def test_vacancy_discs_on_torus():
    # in the window every vacancy component is a disc: chi(B) = chi(T^2) - #discs
    cfg = WindowConfig(4e3, 2, 2, 0.0)
    for t in range(8):
        cloud = sample_poisson(cfg.n, 2, SeedSpec(4, t))
        assert euler_from_vacancy(cloud, 2, cfg.r0) == -vacancy_components(cloud, 2, cfg.r0).component_count


def test_out_of_regime():
    with pytest.raises(OutOfRegime):
        euler_from_vacancy(from_coords([[0.1, 0.1], [0.5, 0.5]], 2), 1, 0.1)


def test_circle_gap_law():
    # d = 1, k = 1: E chi = E #(gaps > 2r) = n e^{-2nr} = n e^{-Lambda}
    n, Lam = 200.0, math.log(200.0) + 1.0
    rows = expected_euler_curve(n, 1, 1, [Lam], trials=2000, master_seed=12)
    row = rows[0]
    # chi is minus the count of vacancy arcs when the cover is not complete...
    # the complement identity returns chi(B) = #arcs of B = #gaps > 2r
    assert abs(row.mean_chi - n * math.exp(-Lam)) <= 3 * row.se
    # direct gap counting on the same clouds
    gaps = [np.sum(circle_gaps(sample_poisson(n, 1, SeedSpec(12, t)).points) > 2 * row.r)
            for t in range(2000)]
    assert row.chis == [int(g) for g in gaps]


def test_far_above_threshold_chi_is_zero():
    n = 2e3
    Lam = math.log(n) + 2 * math.log(math.log(n)) + 10
    row = expected_euler_curve(n, 2, 2, [Lam], trials=30, master_seed=2)[0]
    assert row.chis == [0] * row.trials and row.excluded == 0


def test_fit_recovers_known_form():
    n = 1e4
    L = np.linspace(9, 17, 9)
    A = np.array([0.0, -0.7, 0.4])
    mean = n * np.exp(-L) * (A[0] + A[1] * L + A[2] * L ** 2)
    se = 0.01 * np.abs(mean) + 1e-3
    rows = [EulerRow(float(l), 0.0, float(m), float(s), 100, 0, []) for l, m, s in zip(L, mean, se)]
    fit = fit_euler_form(rows, n, 2)
    assert fit.coef == pytest.approx(A, abs=1e-6)
    assert fit.points_used == 9
    rows.append(EulerRow(30.0, 0.0, 0.0, 0.0, 100, 0, [0] * 100))
    assert fit_euler_form(rows, n, 2).points_used == 9
