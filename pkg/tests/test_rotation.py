import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latticemm.rotation import (
    RotationSpec,
    apply_rht,
    center_column,
    fwht_inplace,
    invert_rht,
    mean_grid_kmax,
    next_pow2,
    norm_grid_size,
    quantize_mean,
    quantize_norm,
    side_info_bits,
)


def _hadamard(n):
    H = np.array([[1.0]])
    while H.shape[0] < n:
        H = np.block([[H, H], [H, -H]])
    return H


@pytest.mark.parametrize("n", [1, 2, 8, 64])
def test_fwht_matches_dense_hadamard(n, rng):
    x = rng.standard_normal((3, n))
    y = x.copy()
    fwht_inplace(y)
    np.testing.assert_allclose(y, x @ _hadamard(n).T, atol=1e-12)


def test_fwht_involution():
    x = np.random.default_rng(1).standard_normal(8)
    y = x.copy()
    fwht_inplace(fwht_inplace(y))
    np.testing.assert_allclose(y, 8 * x, atol=1e-12)


def test_fwht_rejects_bad_input():
    with pytest.raises(ValueError):
        fwht_inplace(np.zeros(6))
    with pytest.raises(ValueError):
        fwht_inplace(np.zeros((4, 8))[:, ::2])


def test_next_pow2():
    assert [next_pow2(n) for n in (1, 2, 3, 5, 1024, 1025, 6144)] == [1, 2, 4, 8, 1024, 2048, 8192]


@pytest.mark.parametrize("n", [5, 16, 100])
def test_rht_is_a_scaled_isometry(n, rng):
    spec = RotationSpec(n, sign_seed=7)
    x = rng.standard_normal((4, n))
    u = apply_rht(x, spec)
    np.testing.assert_allclose(np.linalg.norm(u, axis=1), math.sqrt(spec.n_pad), rtol=1e-12)
    # inner products are preserved up to the normalization
    G = (x / np.linalg.norm(x, axis=1, keepdims=True)) @ (x / np.linalg.norm(x, axis=1, keepdims=True)).T
    np.testing.assert_allclose(u @ u.T / spec.n_pad, G, atol=1e-12)
    back = invert_rht(u, spec) * np.linalg.norm(x, axis=1, keepdims=True)
    np.testing.assert_allclose(back, x, atol=1e-12)


def test_rht_zero_column_and_determinism():
    spec = RotationSpec(10, sign_seed=3)
    x = np.zeros((2, 10))
    x[1, 4] = 2.0
    u = apply_rht(x, spec)
    assert not u[0].any()
    assert np.array_equal(u, apply_rht(x, RotationSpec(10, sign_seed=3)))
    assert not np.array_equal(spec.signs(), RotationSpec(10, sign_seed=4).signs())


def test_rht_spreads_a_spike():
    spec = RotationSpec(1024, sign_seed=0)
    x = np.zeros(1024)
    x[17] = 5.0
    u = apply_rht(x, spec)
    np.testing.assert_allclose(np.abs(u), 1.0)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 50), seed=st.integers(0, 2**31))
def test_centering_rank_one_identity(n, seed):
    r = np.random.default_rng(seed)
    a, b = r.standard_normal((2, n)) + r.normal(size=(2, 1)) * 3
    a_bar, mu_a = center_column(a)
    b_bar, mu_b = center_column(b)
    assert abs(a_bar.sum()) < 1e-9 * (1 + abs(a).sum())
    assert a @ b == pytest.approx(a_bar @ b_bar + n * mu_a * mu_b, rel=1e-9, abs=1e-9)


def test_mean_grid_against_brute_search():
    delta, M = 0.05, 2.0
    kmax = mean_grid_kmax(delta, M)
    grid = np.arange(-kmax, kmax + 1) * 2 * delta
    x = np.random.default_rng(0).uniform(-M, M, 500)
    brute = grid[np.argmin(np.abs(grid[None, :] - x[:, None]), axis=1)]
    np.testing.assert_allclose(quantize_mean(x, delta, M), brute, atol=1e-15)
    assert np.all(np.abs(quantize_mean(x, delta, M) - x) <= delta + 1e-12)
    with pytest.raises(ValueError):
        quantize_mean(np.array([2.5]), delta, M)


def test_norm_grid_against_brute_search():
    delta, M, n = 0.2, 3.0, 16
    T = norm_grid_size(delta, M, n)
    grid = np.concatenate([[0.0], M**-4.0 * np.exp(np.arange(T + 1) * math.log1p(delta))])
    x = np.concatenate([[0.0, 1e-9], np.random.default_rng(1).uniform(0, math.sqrt(n) * M, 500)])
    brute = grid[np.argmin(np.abs(grid[None, :] - x[:, None]), axis=1)]
    np.testing.assert_allclose(quantize_norm(x, delta, M, n), brute, rtol=1e-13)
    big = x > M**-4
    rel = np.abs(quantize_norm(x[big], delta, M, n) - x[big]) / x[big]
    assert np.all(rel <= delta)
    with pytest.raises(ValueError):
        quantize_norm(np.array([-1.0]), delta, M, n)


def test_side_info_widths_cover_the_grids():
    delta, M, n = 1e-9, 1e6, 6144
    mb, nb = side_info_bits(delta, M, n)
    assert 2**mb >= 2 * mean_grid_kmax(delta, M) + 1 > 2 ** (mb - 1)
    assert 2**nb >= norm_grid_size(delta, M, n) + 2 > 2 ** (nb - 1)
