import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from risktrc.simplex import simplex_max


def test_textbook_example():
    # max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), objective 36
    res = simplex_max([3, 5], [[1, 0], [0, 2], [3, 2]], [4, 12, 18])
    assert res.status == "optimal"
    np.testing.assert_allclose(res.x, [2, 6], atol=1e-12)
    assert res.objective == pytest.approx(36.0)
    np.testing.assert_allclose(res.slack, [2, 0, 0], atol=1e-12)


def test_unbounded_direction():
    assert simplex_max([1, 1], [[1, -1]], [1]).status == "unbounded"


def test_negative_rhs_rejected():
    with pytest.raises(ValueError):
        simplex_max([1], [[1]], [-1])


def test_degenerate_problem_terminates():
    # several constraints tight at the origin
    A = [[1, 1, 1], [1, -1, 0], [0, 1, -1], [-1, 0, 1]]
    res = simplex_max([1, 2, 3], A, [3, 0, 0, 0])
    assert res.status == "optimal" and res.objective == pytest.approx(6.0)


@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 6))
def test_matches_scipy(seed, m, n):
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1, 2, (m, n))
    A[rng.random((m, n)) < 0.2] = 0.0
    b = rng.uniform(0, 3, m)
    c = rng.uniform(-1, 2, n)
    ours = simplex_max(c, A, b)
    ref = linprog(-c, A_ub=A, b_ub=b, bounds=[(0, None)] * n, method="highs")
    if ref.status == 3:
        assert ours.status == "unbounded"
    else:
        assert ours.status == "optimal"
        assert ours.objective == pytest.approx(-ref.fun, abs=1e-8)
        assert np.all(A @ ours.x <= b + 1e-9) and np.all(ours.x >= -1e-12)
