import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from bagbw.errors import DataError, DegenerateNeighborhoodError, InvalidBandwidthError, InvalidDensityError
from bagbw.estimator import (
    Dataset,
    ecdf_transform,
    fit_curve,
    nw_estimate,
    nw_loo,
    nw_modified,
    nw_modified_loo,
)
from conftest import gauss, naive_nw

FIXED_X = np.array([0.1, 0.35, 0.4, 0.72, 0.9])
FIXED_Y = np.array([1.0, -0.5, 2.0, 0.3, 1.7])


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset([1.0, 2.0], [1.0])
    with pytest.raises(DataError):
        Dataset([1.0], [1.0])
    with pytest.raises(DataError):
        Dataset([1.0, np.nan], [1.0, 2.0])
    d = Dataset([1, 2, 3], [4, 5, 6])
    assert d.n == 3 and d.x.dtype == float
    with pytest.raises(ValueError):
        d.x[0] = 5.0


def test_constant_response_reproduced(k):
    d = Dataset(np.linspace(0, 1, 30), np.full(30, 2.5))
    for h in (0.01, 0.1, 3.0):
        assert nw_estimate(d, k, h, 0.37) == 2.5


def test_two_points_large_h_gives_midpoint(k):
    d = Dataset([0.0, 1.0], [0.0, 1.0])
    assert nw_estimate(d, k, 1e8, 0.2) == pytest.approx(0.5, abs=1e-12)


def test_five_points_match_naive_sum(k):
    d = Dataset(FIXED_X, FIXED_Y)
    x0 = FIXED_X.mean()
    assert nw_estimate(d, k, 0.3, x0) == pytest.approx(naive_nw(FIXED_X, FIXED_Y, 0.3, x0), rel=1e-14)


def test_vector_evaluation_matches_scalar(k):
    d = Dataset(FIXED_X, FIXED_Y)
    pts = np.linspace(0, 1, 7)
    vec = nw_estimate(d, k, 0.2, pts)
    assert vec.shape == (7,)
    np.testing.assert_allclose(vec, [nw_estimate(d, k, 0.2, p) for p in pts], rtol=1e-14)


def test_degenerate_neighborhood(k):
    d = Dataset([0.0, 1.0], [0.0, 1.0])
    with pytest.raises(DegenerateNeighborhoodError):
        nw_estimate(d, k, 1e-3, 50.0)


def test_bad_bandwidth(k):
    d = Dataset(FIXED_X, FIXED_Y)
    with pytest.raises(InvalidBandwidthError):
        nw_estimate(d, k, 0.0, 0.5)
    with pytest.raises(InvalidBandwidthError):
        nw_loo(d, k, -1.0, 0)


def test_loo_constant(k):
    d = Dataset(FIXED_X, np.full(5, -1.25))
    assert all(nw_loo(d, k, 0.2, i) == pytest.approx(-1.25, rel=1e-15) for i in range(5))


def test_loo_three_points_delete_and_refit(k):
    d = Dataset(FIXED_X[:3], FIXED_Y[:3])
    for i in range(3):
        ref = nw_estimate(d.delete(i), k, 0.25, d.x[i])
        assert nw_loo(d, k, 0.25, i) == pytest.approx(ref, rel=1e-12)


def test_loo_two_points_returns_other_response(k):
    d = Dataset([0.2, 0.8], [3.0, 7.0])
    assert nw_loo(d, k, 0.1, 0) == 7.0
    assert nw_loo(d, k, 0.1, 1) == 3.0


def _naive_modified(x, y, h, x0, m, f):
    s = sum(gauss((x0 - xi) / h) / h * (yi - m(x0)) for xi, yi in zip(x, y))
    return m(x0) + s / (len(x) * f(x0))


def test_modified_constant_m(k):
    class Truth:
        m = staticmethod(lambda t: 4.0)
        f = staticmethod(lambda t: 1.0)

    d = Dataset(FIXED_X, np.full(5, 4.0))
    assert nw_modified(d, k, 0.2, 0.5, Truth) == 4.0
    assert nw_modified_loo(d, k, 0.2, 2, Truth) == 4.0


def test_modified_matches_naive_on_m1(k, m1):
    d = m1.sample(4, seed=11)
    ref = _naive_modified(d.x, d.y, 0.2, 0.5, m1.model.m, m1.model.f)
    assert nw_modified(d, k, 0.2, 0.5, m1.model) == pytest.approx(ref, rel=1e-12)


def test_modified_large_h_near_truth(k, m1):
    d = m1.sample(20, seed=3)
    x0, h = 0.5, 1e3
    mx, fx = m1.model.m(x0), m1.model.f(x0)
    bound = k.K0 * np.max(np.abs(d.y - mx)) / (h * fx)
    assert abs(nw_modified(d, k, h, x0, m1.model) - mx) < bound


def test_modified_loo_two_points(k, m1):
    d = Dataset([0.3, 0.6], [0.5, 1.4])
    m, f = m1.model.m, m1.model.f
    expect = m(0.3) + gauss((0.3 - 0.6) / 0.2) / 0.2 * (1.4 - m(0.3)) / f(0.3)
    assert nw_modified_loo(d, k, 0.2, 0, m1.model) == pytest.approx(expect, rel=1e-12)


def test_modified_loo_delete_and_refit(k, m2):
    d = m2.sample(5, seed=8)
    for i in range(5):
        ref = _naive_modified(np.delete(d.x, i), np.delete(d.y, i), 0.15, d.x[i], m2.model.m, m2.model.f)
        assert nw_modified_loo(d, k, 0.15, i, m2.model) == pytest.approx(ref, rel=1e-12)


def test_modified_rejects_zero_density(k, m1):
    d = m1.sample(10, seed=0)
    with pytest.raises(InvalidDensityError):
        nw_modified(d, k, 0.1, 1.0, m1.model)  # Beta(3,3) density vanishes at 1
    with pytest.raises(InvalidDensityError):
        nw_modified(d, k, 0.1, 1.5, m1.model)


def test_ecdf_examples():
    t, q = ecdf_transform(Dataset([3.0, 1.0, 2.0], [0.0, 0.0, 0.0]))
    np.testing.assert_allclose(t.x, [1.0, 1 / 3, 2 / 3], rtol=1e-15)
    np.testing.assert_array_equal(q(t.x), [3.0, 1.0, 2.0])
    t, q = ecdf_transform(Dataset([1.0, 1.0, 2.0], [0.0, 0.0, 0.0]))
    np.testing.assert_allclose(t.x, [0.5, 0.5, 1.0], rtol=1e-15)
    np.testing.assert_array_equal(q(t.x), [1.0, 1.0, 2.0])


def _sort_based_average_ranks(x):
    order = sorted(range(len(x)), key=lambda i: x[i])
    ranks = [0.0] * len(x)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and x[order[j + 1]] == x[order[i]]:
            j += 1
        for t in range(i, j + 1):
            ranks[order[t]] = (i + j) / 2 + 1
        i = j + 1
    return np.array(ranks) / len(x)


@given(st.lists(st.integers(-5, 5), min_size=2, max_size=40))
def test_ecdf_ranks_and_round_trip(xs):
    x = np.array(xs, dtype=float)
    t, q = ecdf_transform(Dataset(x, np.zeros_like(x)))
    np.testing.assert_allclose(t.x, _sort_based_average_ranks(xs), rtol=1e-14)
    assert np.all((t.x > 0) & (t.x <= 1))
    np.testing.assert_array_equal(q(t.x), x)


def test_fit_curve_defaults(k, m1):
    d = m1.sample(300, seed=2)
    c = fit_curve(d, k, 0.05)
    assert c.grid.size == 401 and c.grid[0] == d.x.min() and c.grid[-1] == d.x.max()
    assert np.all((c.values >= d.y.min()) & (c.values <= d.y.max()))


finite = st.floats(-100, 100, allow_nan=False)


@settings(max_examples=60)
@given(
    arrays(float, st.integers(2, 30), elements=st.floats(0, 1)),
    st.data(),
    st.floats(0.05, 2.0),
    finite,
    finite,
)
def test_nw_properties(x, data, h, c, a):
    y = data.draw(arrays(float, x.size, elements=st.floats(-10, 10)))
    d = Dataset(x, y)
    x0 = data.draw(st.floats(0, 1))
    k_ = __import__("bagbw").gaussian_kernel()
    v = nw_estimate(d, k_, h, x0)
    assert y.min() <= v <= y.max()
    shifted = nw_estimate(Dataset(x, y + c), k_, h, x0)
    assert shifted == pytest.approx(v + c, abs=1e-9 * (1 + abs(c) + abs(v)))
    moved = nw_estimate(Dataset(x + a, y), k_, h, x0 + a)
    assert moved == pytest.approx(v, abs=1e-9 * (1 + abs(v)))


@settings(max_examples=60)
@given(arrays(float, st.integers(2, 25), elements=st.floats(0, 1)), st.data(), st.floats(0.05, 2.0))
def test_loo_equals_delete_and_refit(x, data, h):
    y = data.draw(arrays(float, x.size, elements=st.floats(-10, 10)))
    d = Dataset(x, y)
    k_ = __import__("bagbw").gaussian_kernel()
    i = data.draw(st.integers(0, x.size - 1))
    ref = naive_nw(np.delete(x, i), np.delete(y, i), h, x[i])
    assert nw_loo(d, k_, h, i) == pytest.approx(ref, rel=1e-12, abs=1e-12)
