import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pbrnn.errors import SingularDesign
from pbrnn.numerics import child_seed, fallback_ridge, make_rng, ols_fit, ols_fit_robust, spawn_rngs, uniform_init

from oracles import lstsq


def test_ols_exact_interpolation():
    W = ols_fit([[1, 1], [1, 2]], [[3], [5]])
    np.testing.assert_allclose(W, [[1], [2]], atol=1e-12)


def test_ols_identity():
    np.testing.assert_allclose(ols_fit(np.eye(3), np.eye(3)), np.eye(3), atol=1e-14)


def test_ols_collinear_raises():
    with pytest.raises(SingularDesign):
        ols_fit([[1, 1], [1, 1], [1, 1]], [[1], [2], [3]])


def test_ols_underdetermined_raises():
    with pytest.raises(SingularDesign):
        ols_fit(np.ones((2, 3)), np.ones((2, 1)))


def test_ols_vector_target_and_ridge_shrinks():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((40, 3))
    y = X @ np.array([1.0, -2.0, 0.5])
    w0 = ols_fit(X, y)
    assert w0.shape == (3, 1)
    w1 = ols_fit(X, y, ridge=10.0)[:, 0]
    assert np.linalg.norm(w1) < np.linalg.norm(w0)
    # ridge normal equations
    np.testing.assert_allclose((X.T @ X + 10.0 * np.eye(3)) @ w1, X.T @ y, rtol=1e-10)


def test_ols_matches_lstsq_oracle():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((50, 6))
    y = rng.standard_normal((50, 2))
    np.testing.assert_allclose(ols_fit(X, y), lstsq(X, y), rtol=1e-10, atol=1e-12)


def test_robust_fallback_on_collinear():
    X = np.array([[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]])
    W = ols_fit_robust(X, np.array([[2.0], [2.0], [2.0]]))
    assert np.all(np.isfinite(W))
    np.testing.assert_allclose(X @ W, 2.0, rtol=1e-6)
    assert fallback_ridge(X) == pytest.approx(1e-8 * 6.0 / 2)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 8), st.integers(1, 3))
def test_ols_residual_orthogonal(seed, p, q):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((p + 20, p)) * rng.uniform(0.1, 10, p)
    y = rng.standard_normal((p + 20, q))
    W = ols_fit(X, y)
    assert np.linalg.norm(X.T @ (y - X @ W)) <= 1e-8 * np.linalg.norm(X.T @ y)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matmul_associative(seed):
    rng = np.random.default_rng(seed)
    A, B, C = (rng.standard_normal((4, 5)), rng.standard_normal((5, 3)), rng.standard_normal((3, 6)))
    left, right = (A @ B) @ C, A @ (B @ C)
    assert np.linalg.norm(left - right) <= 1e-10 * max(np.linalg.norm(left), 1.0)


def test_uniform_init_mean_bound():
    w = uniform_init(make_rng(7), 1000, None, 0.01)
    assert abs(w.mean()) < 0.002
    assert w.min() >= -0.01 and w.max() <= 0.01


def test_uniform_init_reproducible():
    np.testing.assert_array_equal(uniform_init(make_rng(3), 4, 5, 0.5), uniform_init(make_rng(3), 4, 5, 0.5))


def test_uniform_init_empty_and_bad_scale():
    assert uniform_init(make_rng(0), 0, 3, 0.1).shape == (0, 3)
    with pytest.raises(ValueError):
        uniform_init(make_rng(0), 2, 2, 0.0)


def test_uniform_init_advances_stream():
    rng = make_rng(5)
    a = uniform_init(rng, 3, 3, 1.0)
    b = uniform_init(rng, 3, 3, 1.0)
    assert not np.array_equal(a, b)


def test_rng_streams_independent():
    a, b = spawn_rngs(11, 2)
    x, y = a.standard_normal(5000), b.standard_normal(5000)
    assert abs(np.corrcoef(x, y)[0, 1]) < 0.06
    assert not np.array_equal(make_rng(1).random(4), make_rng(2).random(4))


def test_child_seed_stable_and_distinct():
    assert child_seed(3, 1, 2) == child_seed(3, 1, 2)
    assert len({child_seed(3, k) for k in range(200)}) == 200
    assert 0 <= child_seed(0, 5) < 2**63


@given(arrays(np.float64, (6, 2), elements=st.floats(-1e3, 1e3)))
def test_ols_identity_design_returns_target(y):
    np.testing.assert_allclose(ols_fit(np.eye(6), y), y, atol=1e-9)
