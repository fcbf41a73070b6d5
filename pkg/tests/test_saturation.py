import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from satroa.saturation import (
    SatKind,
    SatVariant,
    deadzone,
    delta,
    delta_bounds,
    sat,
    sat_norm,
    sat_pointwise,
    sector_check,
)
from satroa.spectral import grid_weights, uniform_grid

finite = st.floats(-1e6, 1e6, allow_nan=False)
levels = st.floats(1e-3, 1e3)
X = uniform_grid(2.0, 201)
W = grid_weights(X)


def l2(f):
    return float(np.sqrt(f**2 @ W))


def test_sat_examples():
    np.testing.assert_array_equal(sat([0.5, -0.3], 2), [0.5, -0.3])
    np.testing.assert_array_equal(sat([5, -7], 2), [2, -2])
    np.testing.assert_array_equal(sat(np.zeros(3), 2), 0)


def test_deadzone_examples():
    np.testing.assert_array_equal(deadzone([1.0], 2), [0])
    np.testing.assert_array_equal(deadzone([5.0], 2), [-3])


def test_sat_norm_examples():
    np.testing.assert_allclose(sat_norm([3, 4], 10), [3, 4])
    np.testing.assert_allclose(sat_norm([3, 4], 1), [0.6, 0.8])
    np.testing.assert_array_equal(sat_norm([0.0, 0.0], 1), [0, 0])


def test_pointwise_plateau():
    f = 3 * np.sin(np.pi * X / 2.0)
    out = sat_pointwise(f, 1.0)
    np.testing.assert_array_equal(out, np.where(np.abs(f) > 1, np.sign(f), f))
    assert np.max(out) == 1.0
    np.testing.assert_array_equal(sat_pointwise(np.zeros(5), 1.0), 0)
    g = 0.5 * np.cos(X)
    np.testing.assert_array_equal(sat_pointwise(g, 1.0), g)


def test_level_must_be_positive():
    with pytest.raises(ValueError):
        sat([1.0], 0.0)
    with pytest.raises(ValueError):
        SatKind(SatVariant.NORMWISE, -1.0)


def test_sat_kind_dispatch():
    v = np.array([3.0, 4.0])
    assert np.allclose(SatKind(SatVariant.NORMWISE, 1.0)(v), [0.6, 0.8])
    assert np.allclose(SatKind(SatVariant.COMPONENTWISE, 1.0)(v), [1.0, 1.0])


@settings(max_examples=500)
@given(arrays(float, st.integers(1, 6), elements=finite), arrays(float, 6, elements=finite), levels)
def test_sat_is_odd_bounded_and_lipschitz(v, w, level):
    w = w[: len(v)]
    s = sat(v, level)
    assert np.all(np.abs(s) <= level)
    np.testing.assert_array_equal(sat(-v, level), -s)
    assert np.all(np.abs(s - sat(w, level)) <= np.abs(v - w) + 1e-9)


@settings(max_examples=500)
@given(arrays(float, st.integers(1, 6), elements=finite), levels)
def test_deadzone_vanishes_exactly_inside(v, level):
    inside = np.clip(v, -level, level)
    assert not np.any(deadzone(inside, level))


@settings(max_examples=300)
@given(arrays(float, st.integers(1, 6), elements=finite), levels)
def test_sat_norm_keeps_direction(v, level):
    out = sat_norm(v, level)
    assert np.linalg.norm(out) <= level * (1 + 1e-12) or np.allclose(out, v)
    if np.linalg.norm(v) > 0:
        assert abs(np.dot(out, v) - np.linalg.norm(out) * np.linalg.norm(v)) <= 1e-9 * np.dot(v, v)


def test_sector_trivial_cases():
    K = np.array([[1.0, 2.0]])
    assert sector_check(np.zeros(2), K, K * 0.5, [1.0], 1.0).value == 0.0
    z = np.array([0.3, -0.1])
    assert sector_check(z, K, K, [2.0], 1.0).value == 0.0


def test_sector_flags_precondition():
    res = sector_check(np.array([10.0, 0.0]), np.array([[1.0, 0.0]]), np.array([[0.0, 0.0]]), [1.0], 1.0)
    assert not res.precondition and res.violated_index == 0 and res.value is None


@settings(max_examples=10_000, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**32 - 1), levels)
def test_sector_condition_holds(n, m, seed, level):
    rng = np.random.default_rng(seed)
    K = rng.normal(size=(m, n)) * rng.uniform(0.1, 10)
    C = K + rng.normal(size=(m, n)) * rng.uniform(0, 3)
    z = rng.normal(size=n) * rng.uniform(0.1, 100)
    gap = np.max(np.abs((K - C) @ z))
    if gap > level:
        z *= 0.999 * level / gap
    res = sector_check(z, K, C, rng.uniform(0.01, 10, size=m), level)
    assert res.precondition and res.value <= 1e-12 * (1 + abs(res.value))


def test_delta_examples():
    b = 0.3 * np.sin(X)
    assert not np.any(delta(b, 1.5, 2.0))
    assert not np.any(delta(np.ones_like(X), 17.0, 2.0))


@settings(max_examples=10_000, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-50, 50), levels)
def test_delta_bounds(seed, k, level):
    rng = np.random.default_rng(seed)
    b = rng.normal(size=len(X)) * rng.uniform(0.01, 5)
    d = delta(b, k, level)
    bd = delta_bounds(b, k, level, X)
    assert np.all(np.abs(d) <= bd["pointwise"] * (1 + 1e-12))
    assert l2(d) <= bd["l2"] * (1 + 1e-12)
    assert np.max(np.abs(d)) <= bd["linf"] * (1 + 1e-12)
    if abs(k) <= level:
        assert l2(d) <= bd["l2_refined"] * (1 + 1e-12) + 1e-15


@settings(max_examples=2000)
@given(st.floats(-5, 5), st.floats(-5, 5), levels)
def test_delta_constant_shape_exact_zero(c, k, level):
    k = float(np.clip(k, -level, level))
    if abs(c * k) > level:
        c = 0.999 * level / abs(k) * np.sign(c)
    assert not np.any(delta(np.full(7, c), k, level))


def test_refined_bound_by_direct_indicator():
    b = 3 * np.sin(np.pi * X / 2.0)
    k, level = 0.9, 1.0
    chi = (np.abs(k * b) > level).astype(float)
    assert l2(delta(b, k, level)) <= level * l2(chi + np.abs(b * chi)) + 1e-15
