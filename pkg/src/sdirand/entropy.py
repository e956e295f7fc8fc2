"""Binary entropy, Phi(x) = h(1/2 + x/2) and its polynomial lower bounds.

All entropies are in bits.  The polynomial family is

    Phi_n(x) = sum_{k=0}^{n} I_k x^{2k} (1 - x^2),

with ``I_k = int_{1/2}^{1} ((1 - z)/z)^{2k} / (z ln 2) dz``.  Every term of the
infinite series is nonnegative, so truncation gives a lower bound that
increases with ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy import integrate

__all__ = [
    "DOMAIN_TOL",
    "EntropyPolyCoeffs",
    "h_bin",
    "phi",
    "compute_coeffs",
    "phi_poly_lower",
    "objective_poly_lower",
    "objective_exact",
]

DOMAIN_TOL = 1e-12
LN2 = math.log(2.0)


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _out(arr, scalar):
    return float(arr) if scalar else arr


def h_bin(p):
    """Binary entropy ``-p log2 p - (1-p) log2 (1-p)`` with ``0 log 0 = 0``.

    Accepts scalars or arrays.  Values outside ``[0, 1]`` by more than
    ``DOMAIN_TOL`` raise ``ValueError``; smaller excursions are clipped.
    """
    p, scalar = _as_array(p)
    if np.any(p < -DOMAIN_TOL) or np.any(p > 1 + DOMAIN_TOL):
        raise ValueError("h_bin argument outside [0, 1]")
    p = np.clip(p, 0.0, 1.0)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
        t2 = np.where(q > 0, -q * np.log2(np.where(q > 0, q, 1.0)), 0.0)
    return _out(t1 + t2, scalar)


def phi(x):
    """``Phi(x) = h_bin(1/2 + x/2)`` on ``[-1, 1]``; even, decreasing in ``|x|``."""
    x, scalar = _as_array(x)
    if np.any(np.abs(x) > 1 + DOMAIN_TOL):
        raise ValueError("phi argument outside [-1, 1]")
    x = np.clip(x, -1.0, 1.0)
    return _out(np.asarray(h_bin(0.5 + 0.5 * np.abs(x))), scalar)


@dataclass(frozen=True)
class EntropyPolyCoeffs:
    """Integrals ``I_0..I_n`` and differences ``C_k = I_{k-1} - I_k``.

    Attributes
    ----------
    order : int
        Truncation order ``n``.
    I : tuple of float
        ``n + 1`` values, ``I[0] == 1``.
    C : tuple of float
        ``n`` values, ``C[k-1] = I[k-1] - I[k]``.
    """

    order: int
    I: tuple
    C: tuple

    def __post_init__(self):
        if len(self.I) != self.order + 1 or len(self.C) != self.order:
            raise ValueError("coefficient lengths do not match order")
        if self.I[0] != 1.0:
            raise ValueError("I_0 must be exactly 1")
        if any(v <= 0 for v in self.I) or any(v <= 0 for v in self.C):
            raise ValueError("I_k and C_k must be positive")


def _integrand(z: float, k: int) -> float:
    return ((1.0 - z) / z) ** (2 * k) / (z * LN2)


@lru_cache(maxsize=None)
def quad_integral(k: int) -> float:
    """``I_k`` by adaptive Gauss-Kronrod quadrature (absolute error <= 1e-12)."""
    if k < 0:
        raise ValueError("k must be non-negative")
    val, err = integrate.quad(_integrand, 0.5, 1.0, args=(k,),
                              epsabs=1e-14, epsrel=1e-13, limit=200)
    if err > 1e-12:
        raise RuntimeError(f"quadrature for I_{k} did not reach 1e-12 (err={err:g})")
    return val


_CLOSED_FORMS = {
    0: lambda: 1.0,
    1: lambda: 1.0 - 1.0 / (2.0 * LN2),
    2: lambda: 1.0 - 7.0 / (12.0 * LN2),
}


@lru_cache(maxsize=None)
def compute_coeffs(order: int) -> EntropyPolyCoeffs:
    """Coefficients of the order-``n`` polynomial bound.

    ``I_0, I_1, I_2`` use their closed forms; higher ``I_k`` come from
    :func:`quad_integral`.
    """
    if int(order) != order or order < 1:
        raise ValueError("order must be a positive integer")
    order = int(order)
    I = [(_CLOSED_FORMS[k]() if k in _CLOSED_FORMS else quad_integral(k))
         for k in range(order + 1)]
    C = [I[k - 1] - I[k] for k in range(1, order + 1)]
    return EntropyPolyCoeffs(order=order, I=tuple(I), C=tuple(C))


def phi_poly_lower(x, coeffs: EntropyPolyCoeffs):
    """``Phi_n(x) = sum_k I_k x^{2k} (1 - x^2)``, a lower bound on :func:`phi`."""
    x, scalar = _as_array(x)
    if np.any(np.abs(x) > 1 + DOMAIN_TOL):
        raise ValueError("phi_poly_lower argument outside [-1, 1]")
    x2 = np.clip(x, -1.0, 1.0) ** 2
    acc = np.zeros_like(x2)
    for Ik in reversed(coeffs.I):  # Horner in x^2
        acc = acc * x2 + Ik
    return _out(acc * (1.0 - x2), scalar)


def objective_poly_lower(a, lambda1, coeffs: EntropyPolyCoeffs):
    """``sum_{k=1}^n C_k (a^{2k} - lambda1^{2k})``.

    Lower bound on ``phi(lambda1) - phi(a)`` whenever ``|lambda1| <= a``.
    """
    a, sa = _as_array(a)
    lam, sl = _as_array(lambda1)
    if np.any(np.abs(lam) > a + DOMAIN_TOL):
        raise ValueError("need |lambda1| <= a")
    a2 = a * a
    l2 = np.minimum(lam * lam, a2)
    acc_a = np.zeros(np.broadcast(a2, l2).shape)
    acc_l = np.zeros_like(acc_a)
    for Ck in reversed(coeffs.C):
        acc_a = (acc_a + Ck) * a2
        acc_l = (acc_l + Ck) * l2
    return _out(np.maximum(acc_a - acc_l, 0.0), sa and sl)


def objective_exact(a, lambda1):
    """``phi(lambda1) - phi(a)``, clipped at zero against rounding."""
    a, sa = _as_array(a)
    lam, sl = _as_array(lambda1)
    if np.any(np.abs(lam) > a + DOMAIN_TOL):
        raise ValueError("need |lambda1| <= a")
    val = np.maximum(np.asarray(phi(lam)) - np.asarray(phi(a)), 0.0)
    return _out(val, sa and sl)
