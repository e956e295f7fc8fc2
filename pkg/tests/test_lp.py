import numpy as np
import pytest
from scipy.optimize import linprog

from sdirand.lp import simplex


def _random_lp(rng, m, n):
    A = rng.normal(size=(m, n))
    x0 = rng.uniform(0, 1, n) * (rng.random(n) < 0.6)
    b = A @ x0
    c = rng.normal(size=n) + 0.5 * np.abs(A).sum(axis=0)
    return c, A, b


@pytest.mark.parametrize("seed", range(200))
def test_matches_highs(seed):
    rng = np.random.default_rng(seed)
    m, n = int(rng.integers(1, 6)), int(rng.integers(2, 30))
    c, A, b = _random_lp(rng, m, n)
    ref = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    res = simplex(c, A, b)
    if ref.status == 3:
        assert res.status == "unbounded"
        return
    assert ref.status == 0 and res.status == "optimal"
    assert res.value == pytest.approx(ref.fun, abs=1e-8 * max(1, abs(ref.fun)))
    assert np.all(res.x >= -1e-12)
    np.testing.assert_allclose(A @ res.x, b, atol=1e-8)
    # dual feasibility and strong duality
    assert np.all(A.T @ res.duals <= c + 1e-8)
    assert b @ res.duals == pytest.approx(res.value, abs=1e-8 * max(1, abs(res.value)))


def test_infeasible():
    A = np.array([[1.0, 1.0]])
    res = simplex([1.0, 1.0], A, [-1.0])
    assert res.status == "infeasible" and res.value == np.inf


def test_unbounded():
    A = np.array([[1.0, -1.0]])
    res = simplex([-1.0, 0.0], A, [0.0])
    assert res.status == "unbounded" and res.value == -np.inf


def test_redundant_rows_and_degeneracy():
    # duplicated constraint and a degenerate vertex
    A = np.array([[1.0, 1.0, 1.0, 0.0], [1.0, 1.0, 1.0, 0.0], [1.0, -1.0, 0.0, 1.0]])
    b = np.array([1.0, 1.0, 0.0])
    c = np.array([-1.0, -2.0, 0.0, 0.0])
    res = simplex(c, A, b)
    ref = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    assert res.status == "optimal"
    assert res.value == pytest.approx(ref.fun, abs=1e-12)
    assert np.all(A.T @ res.duals <= c + 1e-9)


def test_convex_combination_form():
    # the shape used by the min-tradeoff fit: many columns, few rows
    rng = np.random.default_rng(5)
    pts = rng.random((3000, 3))
    vals = (pts ** 2).sum(axis=1)
    x_star = np.array([0.4, 0.5, 0.6])
    A = np.vstack([pts.T, np.ones(pts.shape[0])])
    b = np.concatenate([x_star, [1.0]])
    res = simplex(vals, A, b)
    ref = linprog(vals, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    assert res.value == pytest.approx(ref.fun, abs=1e-9)


def test_input_validation():
    with pytest.raises(ValueError):
        simplex([1.0], np.ones((1, 2)), [1.0])
    with pytest.raises(ValueError):
        simplex([1.0, np.nan], np.ones((1, 2)), [1.0])
