from fractions import Fraction
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdirand.entropy import (
    EntropyPolyCoeffs,
    compute_coeffs,
    h_bin,
    objective_exact,
    objective_poly_lower,
    phi,
    phi_poly_lower,
    quad_integral,
)

LN2 = math.log(2.0)


def alternating_harmonic_I(k):
    """``I_k = 1 - (1 - 1/2 + ... - 1/(2k)) / ln 2`` after substituting ``t = (1 - z)/z``."""
    s = sum(Fraction((-1) ** (j + 1), j) for j in range(1, 2 * k + 1))
    return 1.0 - float(s) / LN2


def test_h_bin_examples():
    assert h_bin(0.5) == 1.0
    assert h_bin(0.0) == 0.0
    assert h_bin(1.0) == 0.0
    assert h_bin(0.8) == pytest.approx(0.7219280948873623, abs=1e-15)


def test_h_bin_domain():
    with pytest.raises(ValueError):
        h_bin(1.1)
    with pytest.raises(ValueError):
        h_bin(-1e-9)
    assert h_bin(1 + 1e-13) == 0.0


def test_h_bin_vectorised():
    p = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
    out = h_bin(p)
    assert out.shape == p.shape
    np.testing.assert_allclose(out, out[::-1], atol=1e-15)


def test_phi_examples():
    assert phi(0.0) == 1.0
    assert phi(1.0) == 0.0
    assert phi(-0.6) == phi(0.6)
    with pytest.raises(ValueError):
        phi(1.01)


def test_phi_nonincreasing_in_abs():
    x = np.linspace(0, 1, 1001)
    assert np.all(np.diff(phi(x)) <= 1e-15)


def test_closed_forms():
    c = compute_coeffs(2)
    assert c.I[0] == 1.0
    assert c.I[1] == pytest.approx(1 - 1 / (2 * LN2), abs=1e-15)
    assert c.I[2] == pytest.approx(1 - 7 / (12 * LN2), abs=1e-15)
    assert c.I[1] == pytest.approx(0.278652, abs=1e-6)
    assert c.I[2] == pytest.approx(0.158428, abs=1e-6)


@pytest.mark.parametrize("k", range(0, 21))
def test_quadrature_matches_series_oracle(k):
    assert abs(quad_integral(k) - alternating_harmonic_I(k)) <= 1e-12


def test_coefficient_invariants():
    c = compute_coeffs(20)
    I = np.array(c.I)
    assert np.all(I > 0) and np.all(np.diff(I) < 0)
    np.testing.assert_allclose(c.C, I[:-1] - I[1:], rtol=0, atol=0)
    assert min(c.C) > 0


def test_coefficient_errors():
    with pytest.raises(ValueError):
        compute_coeffs(0)
    with pytest.raises(ValueError):
        EntropyPolyCoeffs(order=1, I=(0.9, 0.5), C=(0.4,))
    with pytest.raises(ValueError):
        quad_integral(-1)


def test_phi_poly_examples():
    for order in (1, 2, 8):
        c = compute_coeffs(order)
        assert phi_poly_lower(1.0, c) == 0.0
        assert phi_poly_lower(-1.0, c) == 0.0
        assert phi_poly_lower(0.0, c) == 1.0
    c = compute_coeffs(2)
    expected = sum(c.I[k] * 0.25 ** k * 0.75 for k in range(3))
    assert phi_poly_lower(0.5, c) == pytest.approx(expected, abs=1e-15)
    assert phi_poly_lower(0.5, c) <= phi(0.5)


def test_objective_poly_examples():
    c = compute_coeffs(8)
    assert objective_poly_lower(0.0, 0.0, c) == 0.0
    assert objective_poly_lower(0.7, 0.7, c) == 0.0
    assert objective_poly_lower(0.7, -0.7, c) == 0.0
    c1 = compute_coeffs(1)
    v = objective_poly_lower(1.0, 0.0, c1)
    assert v == pytest.approx(1 / (2 * LN2), abs=1e-15)
    assert v <= objective_exact(1.0, 0.0) == 1.0
    with pytest.raises(ValueError):
        objective_poly_lower(0.5, 0.6, c)
    with pytest.raises(ValueError):
        objective_exact(0.5, -0.6)


def test_truncation_sandwich_sweep():
    x = np.linspace(-1, 1, 10_000)
    exact = phi(x)
    prev = None
    for n in range(1, 21):
        cur = phi_poly_lower(x, compute_coeffs(n))
        assert np.all(cur <= exact + 1e-12)
        if prev is not None:
            assert np.all(prev <= cur + 1e-15)
        prev = cur


def test_objective_lower_bound_grid():
    a = np.linspace(0, 1, 200)[:, None]
    t = np.linspace(0, 2 * np.pi, 200)[None, :]
    lam = np.clip(a * np.cos(t), -a, a)
    c = compute_coeffs(8)
    lo = objective_poly_lower(a, lam, c)
    assert np.all(lo >= -1e-12)
    assert np.all(lo <= phi(lam) - phi(a) + 1e-12)


@pytest.mark.parametrize("theta", np.linspace(0.05, np.pi - 0.05, 12))
def test_difference_nondecreasing_in_length(theta):
    x = np.linspace(0, 1, 1000)
    d = phi(x * np.cos(theta)) - phi(x)
    assert np.all(np.diff(d) >= -1e-12)


def test_scaled_difference_nonnegative():
    g = np.linspace(0, 1, 50)
    x, eta, th = np.meshgrid(g, g, np.linspace(0, 2 * np.pi, 50), indexing="ij")
    val = eta * (phi(x * np.cos(th)) - phi(x)) - (phi(eta * x * np.cos(th)) - phi(eta * x))
    assert val.min() >= -1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(-1, 1), st.integers(1, 20))
def test_poly_below_phi_property(x, order):
    assert phi_poly_lower(x, compute_coeffs(order)) <= phi(x) + 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 2 * math.pi), st.integers(1, 12))
def test_objective_between_zero_and_exact_property(a, t, order):
    lam = max(-a, min(a, a * math.cos(t)))
    v = objective_poly_lower(a, lam, compute_coeffs(order))
    assert -1e-12 <= v <= objective_exact(a, lam) + 1e-12
