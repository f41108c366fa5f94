import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kcoverage.errors import Degenerate, DiameterTooLarge, DimensionMismatch
from kcoverage.torus import (TOL_GEO, canonicalize, circumsphere, circumspheres, displacement,
                             in_open_simplex, lift, simplex_volume, torus_distance,
                             torus_distances, wrap)

from oracles import brute_torus_distance

coord = st.floats(0.0, 1.0, allow_nan=False, exclude_max=True)


def pts(d, m):
    return st.lists(st.lists(coord, min_size=d, max_size=d), min_size=m, max_size=m).map(np.array)


# --- examples -------------------------------------------------------------

def test_distance_examples():
    assert torus_distance([0.1], [0.9]) == pytest.approx(0.2)
    assert torus_distance([0.3, 0.3], [0.3, 0.3]) == 0.0
    assert torus_distance([0.05, 0.05], [0.95, 0.95]) == pytest.approx(math.sqrt(0.02), abs=1e-12)
    assert torus_distance([0.05, 0.05], [0.95, 0.95]) == pytest.approx(
        brute_torus_distance([0.05, 0.05], [0.95, 0.95]), abs=1e-15)


def test_distance_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        torus_distance([0.1, 0.2], [0.3])


def test_displacement_examples():
    assert displacement([0.9], [0.1]) == pytest.approx([0.2])
    assert displacement([0.2, 0.2], [0.5, 0.2]) == pytest.approx([0.3, 0.0])
    assert displacement([0.1, 0.9], [0.9, 0.1]) == pytest.approx([-0.2, 0.2])


def test_half_tie_goes_positive():
    assert wrap(0.5) == 0.5
    assert wrap(-0.5) == 0.5
    assert displacement([0.75], [0.25]) == pytest.approx([0.5])


def test_canonicalize_tiny_negative():
    assert canonicalize(-1e-18) == 0.0
    assert 0.0 <= canonicalize(-1e-17) < 1.0


def test_lift_examples():
    one = lift([[0.3, 0.4]])
    assert one.offsets.tolist() == [[0.0, 0.0]] and one.diameter == 0.0
    seam = lift([[0.95], [0.05]])
    assert seam.offsets[:, 0] == pytest.approx([0.0, 0.1])
    assert seam.diameter == pytest.approx(0.1)
    with pytest.raises(DiameterTooLarge):
        lift([[0.0], [0.5]])


def test_lift_across_seam_matches_torus_distances():
    X = np.array([[0.97, 0.02], [0.03, 0.98], [0.99, 0.95]])
    cfg = lift(X)
    P = cfg.points
    for i in range(3):
        for j in range(3):
            assert np.linalg.norm(P[i] - P[j]) == pytest.approx(torus_distance(X[i], X[j]),
                                                                abs=1e-14)


def test_circumsphere_examples():
    c = circumsphere([[0.4, 0.5], [0.6, 0.5]])
    assert c.center == pytest.approx([0.5, 0.5]) and c.radius == pytest.approx(0.1)
    X = [[0.5, 0.6], [0.4, 0.5], [0.6, 0.5]]
    c = circumsphere(X)
    assert c.center == pytest.approx([0.5, 0.5]) and c.radius == pytest.approx(0.1)
    for x in X:
        assert torus_distance(c.center, x) == pytest.approx(0.1, abs=TOL_GEO)
    c = circumsphere([[0.98], [0.04]])
    assert c.center == pytest.approx([0.01]) and c.radius == pytest.approx(0.03)


def test_circumsphere_degenerate():
    with pytest.raises(Degenerate):
        circumsphere([[0.1, 0.1], [0.2, 0.2], [0.3, 0.3]])


def test_in_open_simplex_examples():
    assert in_open_simplex([[0.4], [0.6]], [0.5])
    assert not in_open_simplex([[0.4], [0.6]], [0.4])
    obtuse = np.array([[0.3, 0.5], [0.7, 0.5], [0.5, 0.55]])
    c = circumsphere(obtuse)
    assert not in_open_simplex(obtuse, c.center)


def test_simplex_volume_examples():
    assert simplex_volume([[0.0], [1.0]]) == pytest.approx(1.0)
    assert simplex_volume([[0, 0], [1, 0], [0, 1]]) == pytest.approx(0.5)
    ang = np.deg2rad([0, 120, 240])
    assert simplex_volume(np.c_[np.cos(ang), np.sin(ang)]) == pytest.approx(3 * math.sqrt(3) / 4)
    assert simplex_volume([[0, 0], [1, 1], [2, 2]]) == pytest.approx(0.0, abs=1e-12)


# --- properties -----------------------------------------------------------

@given(pts(2, 3))
def test_metric_axioms(P):
    a, b, c = P
    assert torus_distance(a, b) == torus_distance(b, a)
    assert torus_distance(a, c) <= torus_distance(a, b) + torus_distance(b, c) + 1e-12
    assert torus_distance(a, b) <= math.sqrt(2) / 2 + 1e-15


@given(pts(3, 2))
def test_distance_matches_shift_oracle(P):
    assert torus_distance(P[0], P[1]) == pytest.approx(brute_torus_distance(P[0], P[1]), abs=1e-14)


@given(pts(2, 3), st.lists(coord, min_size=2, max_size=2))
def test_lift_round_trip(P, anchor):
    P = 0.1 * P + np.asarray(anchor)  # diameter well below 1/2
    P = canonicalize(P)
    cfg = lift(P)
    assert np.allclose(canonicalize(cfg.points), P, atol=1e-15) or np.allclose(
        wrap(canonicalize(cfg.points) - P), 0.0, atol=1e-15)


def _random_configs(rng, d, m, count):
    base = rng.random((count, 1, d))
    return canonicalize(base + 0.2 * (rng.random((count, m, d)) - 0.5))


@pytest.mark.parametrize("d,m", [(d, m) for d in (1, 2, 3) for m in range(2, d + 2)])
def test_circumsphere_equidistance(d, m):
    rng = np.random.default_rng(100 * d + m)
    X = _random_configs(rng, d, m, 10_000)
    off = wrap(X - X[:, :1, :])
    center, radius, _, cond = circumspheres(X[:, :1, :] + off)
    ok = cond < 1e12
    # spheres wider than the convexity radius wrap around the torus
    for i in np.flatnonzero(ok & (radius <= 0.25)):
        err = np.abs(torus_distances(X[i], canonicalize(center[i])) - radius[i])
        assert err.max() <= TOL_GEO
    assert ok.mean() > 0.999


@settings(max_examples=50)
@given(pts(2, 3), st.lists(coord, min_size=2, max_size=2))
def test_translation_equivariance(P, v):
    X = canonicalize(0.2 * P + 0.4)
    try:
        c0 = circumsphere(X)
    except Degenerate:
        return
    c1 = circumsphere(canonicalize(X + np.asarray(v)))
    assert torus_distance(c1.center, canonicalize(c0.center + np.asarray(v))) <= TOL_GEO
    assert c1.radius == pytest.approx(c0.radius, abs=TOL_GEO)


@settings(max_examples=50)
@given(pts(2, 3))
def test_centroid_is_inside(P):
    X = canonicalize(0.2 * P + 0.3)
    if simplex_volume(X) < 1e-6:
        return
    assert in_open_simplex(X, X.mean(axis=0))
