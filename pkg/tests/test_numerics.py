import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from metricnet.numerics import as_matrix, gram_matrix, l2_normalize_rows, log1p_sum_exp, pairwise_sq_dists

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def matrices(max_rows=8, max_cols=6):
    shapes = st.tuples(st.integers(1, max_rows), st.integers(1, max_cols))
    return shapes.flatmap(lambda s: arrays(np.float64, s, elements=finite))


def test_as_matrix_rejects_nan():
    with pytest.raises(ValueError):
        as_matrix([[1.0, np.nan]])


def test_gram_small_cases():
    np.testing.assert_array_equal(gram_matrix([[1, 0], [0, 1]]), [[1, 0], [0, 1]])
    np.testing.assert_array_equal(gram_matrix([[2, 0]]), [[4]])


def test_gram_matches_scalar_loop():
    X = np.random.default_rng(0).standard_normal((5, 3))
    expected = [[sum(X[i, k] * X[j, k] for k in range(3)) for j in range(5)] for i in range(5)]
    np.testing.assert_allclose(gram_matrix(X), expected, atol=1e-12, rtol=0)


def test_pairwise_three_four_five():
    np.testing.assert_array_equal(pairwise_sq_dists([[0, 0], [3, 4]]), [[0, 25], [25, 0]])


def test_pairwise_matches_subtraction_loop():
    X = np.random.default_rng(1).standard_normal((6, 4))
    expected = [[sum((X[i, k] - X[j, k]) ** 2 for k in range(4)) for j in range(6)] for i in range(6)]
    np.testing.assert_allclose(pairwise_sq_dists(X), expected, atol=1e-10, rtol=0)


@given(matrices())
def test_pairwise_properties(X):
    D = pairwise_sq_dists(X)
    assert np.all(np.diag(D) == 0)
    assert np.all(D >= 0)
    np.testing.assert_array_equal(D, D.T)


@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 6)), elements=st.floats(-5, 5)))
def test_gram_distance_identity(X):
    G = gram_matrix(X)
    D = pairwise_sq_dists(X)
    g = np.diag(G)
    np.testing.assert_allclose(D, np.maximum(g[:, None] + g[None, :] - 2 * G, 0) * (1 - np.eye(len(X))), atol=1e-9)


def test_log1p_sum_exp_values():
    assert log1p_sum_exp([0.0]) == pytest.approx(math.log(2), abs=1e-15)
    assert log1p_sum_exp([1000.0]) == pytest.approx(1000.0, abs=1e-12)
    assert log1p_sum_exp([]) == 0.0


def test_log1p_sum_exp_matches_extended_precision():
    z = [-1.0, -2.0, -3.0]
    mpmath.mp.dps = 40
    ref = mpmath.log(1 + sum(mpmath.e ** mpmath.mpf(v) for v in z))
    assert log1p_sum_exp(z) == pytest.approx(float(ref), abs=1e-12)


@given(st.lists(st.floats(-700, 700), min_size=1, max_size=10))
def test_log1p_sum_exp_lower_bound(z):
    val = log1p_sum_exp(z)
    assert math.isfinite(val)
    assert val >= max(0.0, max(z)) - 1e-12


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=6), st.integers(0, 5), st.floats(0, 10))
def test_log1p_sum_exp_monotone(z, k, bump):
    k %= len(z)
    bigger = list(z)
    bigger[k] += bump
    assert log1p_sum_exp(bigger) >= log1p_sum_exp(z)


def test_normalize_examples():
    Y, flagged = l2_normalize_rows([[3.0, 4.0], [1.0, 0.0]])
    np.testing.assert_allclose(Y, [[0.6, 0.8], [1.0, 0.0]], atol=1e-15)
    assert not flagged.any()
    Y, _ = l2_normalize_rows([[1.0, 0.0, 0.0]])
    np.testing.assert_array_equal(Y, [[1.0, 0.0, 0.0]])


def test_normalize_random_rows_unit():
    Y, _ = l2_normalize_rows(np.random.default_rng(2).standard_normal((4, 5)))
    norms = [math.sqrt(sum(v * v for v in row)) for row in Y]
    np.testing.assert_allclose(norms, 1.0, atol=1e-12)


def test_normalize_zero_row_is_flagged():
    Y, flagged = l2_normalize_rows([[0.0, 0.0], [1.0, 1.0]])
    assert flagged.tolist() == [True, False]
    np.testing.assert_array_equal(Y[0], [0.0, 0.0])


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 5)), elements=st.floats(0.01, 10)))
def test_normalize_idempotent(X):
    once, _ = l2_normalize_rows(X)
    twice, _ = l2_normalize_rows(once)
    np.testing.assert_allclose(twice, once, atol=1e-12)
