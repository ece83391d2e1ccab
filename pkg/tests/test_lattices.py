import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import brute_nearest
from latticemm.lattices import (
    draw_dither,
    dn,
    e8,
    gamma1_rule_of_thumb,
    get_lattice,
    second_moment_mc,
    unit_ball_volume,
    zn,
)

LATTICES = [zn(1), zn(2), zn(3), dn(3), dn(4), e8()]
IDS = [lat.name for lat in LATTICES]


def _is_member(lat, p):
    p = np.asarray(p, dtype=float)
    if lat.kind == "Z":
        return np.all(p == np.rint(p), axis=-1)
    if lat.kind == "D":
        return np.all(p == np.rint(p), axis=-1) & (np.rint(p.sum(axis=-1)) % 2 == 0)
    integral = np.all(p == np.rint(p), axis=-1)
    half = np.all(p - 0.5 == np.rint(p - 0.5), axis=-1)
    return (integral | half) & (np.rint(p.sum(axis=-1)) % 2 == 0)


def test_d3_worked_examples():
    D3 = dn(3)
    assert np.array_equal(D3.nearest_point([0.6, 0.6, 0.6]), [0.0, 1.0, 1.0])
    np.testing.assert_allclose(D3.mod([1.2, 0.1, 0.9]), [0.2, 0.1, -0.1], atol=1e-15)


def test_round_half_down_on_z():
    Z1 = zn(1)
    x = np.array([[-1.5], [-0.5], [0.5], [1.5], [2.5]])
    assert np.array_equal(Z1.nearest_point(x).ravel(), [-2.0, -1.0, 0.0, 1.0, 2.0])


def test_no_negative_zero():
    out = dn(3).nearest_point([[-0.1, -0.2, 0.05]])
    assert not np.any(np.signbit(out))


@pytest.mark.parametrize("lat", LATTICES, ids=IDS)
def test_matches_brute_force_on_random_points(lat, rng):
    x = rng.normal(scale=2.0, size=(1000, lat.dim))
    assert np.array_equal(lat.nearest_point(x), brute_nearest(lat, x))


@pytest.mark.parametrize("lat", [dn(3), dn(4)], ids=["D3", "D4"])
def test_dn_ties_on_half_integer_grid(lat):
    grid = np.array(list(itertools.product(np.arange(-1.5, 1.51, 0.5), repeat=lat.dim)))
    assert np.array_equal(lat.nearest_point(grid), brute_nearest(lat, grid))


def test_e8_ties_on_quarter_grid(rng):
    lat = e8()
    x = rng.integers(-6, 7, size=(400, 8)) / 4.0
    assert np.array_equal(lat.nearest_point(x), brute_nearest(lat, x))


@pytest.mark.parametrize("lat", LATTICES, ids=IDS)
@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_idempotent_and_member(lat, data):
    x = data.draw(arrays(np.float64, (lat.dim,), elements=st.floats(-50, 50)))
    p = lat.nearest_point(x)
    assert _is_member(lat, p)
    assert np.array_equal(lat.nearest_point(p), p)


@pytest.mark.parametrize("lat", LATTICES, ids=IDS)
@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_shift_equivariance(lat, data):
    x = data.draw(arrays(np.float64, (lat.dim,), elements=st.floats(-20, 20)))
    coords = data.draw(arrays(np.int64, (lat.dim,), elements=st.integers(-5, 5)))
    v = lat.from_integer_coords(coords)
    left = lat.nearest_point(x + v)
    right = lat.nearest_point(x) + v
    # equal unless x sits on a cell boundary, where ties may resolve differently
    if not np.array_equal(left, right):
        assert np.isclose(np.sum((x + v - left) ** 2), np.sum((x + v - right) ** 2))


@pytest.mark.parametrize("lat", LATTICES, ids=IDS)
def test_mod_lands_in_cell(lat, rng):
    x = rng.normal(scale=5, size=(2000, lat.dim))
    r = lat.mod(x)
    assert np.all(np.linalg.norm(r, axis=1) <= lat.r_cov + 1e-12)
    assert np.array_equal(lat.nearest_point(r), np.zeros_like(r))


@pytest.mark.parametrize("lat", LATTICES, ids=IDS)
def test_integer_coordinates_round_trip(lat, rng):
    coords = rng.integers(-9, 10, size=(200, lat.dim))
    pts = lat.from_integer_coords(coords)
    assert _is_member(lat, pts).all()
    assert np.array_equal(lat.to_integer_coords(pts), coords)


@pytest.mark.parametrize("lat", LATTICES, ids=IDS)
def test_tau_scaled_integers_are_points(lat):
    pts = lat.tau * np.eye(lat.dim)
    assert _is_member(lat, pts).all()


@pytest.mark.parametrize("lat", LATTICES, ids=IDS)
def test_geometry_constants(lat):
    assert lat.r_eff <= lat.r_cov + 1e-12
    # a unit cube's second moment (1/12) upper-bounds all lattices' NSM here
    assert lat.nsm <= 1 / 12 + 1e-12
    assert lat.covol == pytest.approx({"Z": 1.0, "D": 2.0, "E8": 1.0}[lat.kind])


def test_known_covering_radii():
    assert zn(3).r_cov == pytest.approx(math.sqrt(3) / 2)
    assert dn(3).r_cov == 1.0
    assert dn(4).r_cov == 1.0
    assert e8().r_cov == 1.0


def test_unit_ball_volume():
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)


@pytest.mark.parametrize("lat", [dn(3), dn(4), e8(), zn(2)], ids=["D3", "D4", "E8", "Z2"])
def test_second_moment_monte_carlo(lat):
    est, se = second_moment_mc(lat, 400_000, seed=3)
    assert abs(est - lat.sigma2) <= 4 * se


@pytest.mark.parametrize("lat", LATTICES, ids=IDS)
def test_dither_inside_cell(lat, rng):
    z = draw_dither(lat, rng, 5000)
    assert np.all(np.linalg.norm(z, axis=1) <= lat.r_cov + 1e-12)
    assert np.array_equal(lat.nearest_point(z), np.zeros_like(z))


def test_gamma1_rule_of_thumb_d3():
    assert gamma1_rule_of_thumb(dn(3)) == pytest.approx(0.61386, abs=1e-5)


def test_lookup_and_validation():
    assert get_lattice("d3").name == "D3"
    assert get_lattice("E8").dim == 8
    assert get_lattice("Z4").dim == 4
    for bad in ("A2", "D5", "Q"):
        with pytest.raises(ValueError):
            get_lattice(bad)
    with pytest.raises(ValueError):
        dn(3).nearest_point([1.0, 2.0])
    with pytest.raises(ValueError):
        dn(3).nearest_point([np.nan, 0.0, 0.0])
