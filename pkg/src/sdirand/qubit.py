"""Single-round entropy bound for qubit strategies.

The quantity computed here is the value of

    min  sum_x p_X(x) (Phi(a_x cos xi_x) - Phi(a_x))
    s.t. sum_x (-eta_x + (-1)^x a_x cos xi_x) >= 4 omega - 4
         (sum_x a_x cos xi_x)^2 + (sum_x a_x sin xi_x)^2 >= (4 Theta - sum_x eta_x)^2
         0 <= a_x <= eta_x <= 1,  xi_x in [0, 2 pi]

(``a_x`` is written ``a_tilde`` in the code).  Two exact reductions are used
by the solvers:

* ``eta`` only enters through ``s = eta_0 + eta_1``, which ranges over
  ``[a_0 + a_1, 2]``.  For ``Theta >= 1/2`` a point ``(a, xi)`` is feasible for
  some ``eta`` iff, with ``R = |a_0 e^{i xi_0} + a_1 e^{i xi_1}|``,

      R >= 4 Theta - 2,
      a_0 (1 - cos xi_0) + a_1 (1 + cos xi_1) <= 4 (1 - omega),
      R + a_0 cos xi_0 - a_1 cos xi_1 >= 4 (Theta + omega) - 4.

* Flipping the sign of ``sin xi_x`` changes neither the objective nor the
  first two conditions, and aligning both signs maximises ``R``.  Hence
  ``xi_x`` can be restricted to ``[0, pi]``.

The certified solver is an interval branch and bound over the resulting
4-dimensional box.  On a box the objective minimum is attained at the
smallest ``a_x`` and the largest ``|cos xi_x|`` (the per-input term is
nondecreasing in ``a`` for fixed angle and decreasing in ``|cos xi|``), so the
objective bound is exact and only the constraint relaxation leaves a gap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .entropy import DOMAIN_TOL, compute_coeffs, phi, objective_poly_lower

__all__ = [
    "QubitStrategy",
    "RateQuery",
    "BoundResult",
    "quantum_max_score",
    "classical_boundary",
    "classical_mixing_strategy",
    "strategy_scores",
    "strategy_entropy",
    "is_feasible",
    "g_lower",
    "brute_force_grid",
]

TWO_PI = 2.0 * math.pi
# slack used when deciding a box cannot contain a feasible point
_CONSTRAINT_EPS = 1e-12
# subtracted from box bounds to absorb rounding in Phi
_VALUE_EPS = 1e-12
# witnesses may violate a constraint by rounding only
_POINT_SLACK = 1e-12


@dataclass(frozen=True)
class QubitStrategy:
    """A point of the qubit optimisation problem.

    Attributes
    ----------
    eta : tuple of float
        Block weights ``(eta_0, eta_1)`` in ``[0, 1]``.
    a_tilde : tuple of float
        Bloch lengths ``(a_0, a_1)`` with ``0 <= a_x <= eta_x``.
    xi : tuple of float
        Angles ``(xi_0, xi_1)`` between state and measurement axis.
    phi_angle : float, optional
        Measurement rotation; only meaningful before it is maximised out.
    """

    eta: tuple
    a_tilde: tuple
    xi: tuple
    phi_angle: Optional[float] = None

    def __post_init__(self):
        eta = tuple(float(v) for v in self.eta)
        a = tuple(float(v) for v in self.a_tilde)
        xi = tuple(float(v) for v in self.xi)
        if len(eta) != 2 or len(a) != 2 or len(xi) != 2:
            raise ValueError("eta, a_tilde and xi must be pairs")
        for x in range(2):
            if not (-DOMAIN_TOL <= a[x] <= eta[x] + DOMAIN_TOL and eta[x] <= 1 + DOMAIN_TOL):
                raise ValueError(f"need 0 <= a_tilde[{x}] <= eta[{x}] <= 1, got "
                                 f"a={a[x]!r}, eta={eta[x]!r}")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "a_tilde", a)
        object.__setattr__(self, "xi", xi)

    @property
    def lambda1(self):
        return tuple(a * math.cos(t) for a, t in zip(self.a_tilde, self.xi))

    @property
    def lambda2(self):
        return tuple(a * math.sin(t) for a, t in zip(self.a_tilde, self.xi))

    def as_dict(self):
        return {"eta": list(self.eta), "a_tilde": list(self.a_tilde),
                "xi": list(self.xi), "phi_angle": self.phi_angle}


@dataclass(frozen=True)
class RateQuery:
    """Score ``omega``, overlap ``theta`` and input bias ``p0 = p_X(0)``.

    ``p0`` may lie anywhere in ``(0, 1)``: relabelling the inputs maps the
    problem for ``p0`` onto the one for ``1 - p0``.
    """

    omega: float
    theta: float
    p0: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError(f"omega must be in [0, 1], got {self.omega}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must be in [0, 1], got {self.theta}")
        if not 0.0 < self.p0 < 1.0:
            raise ValueError(f"p0 must be in (0, 1), got {self.p0}")


@dataclass
class BoundResult:
    """Outcome of :func:`g_lower`.

    ``certified_lower`` is ``+inf`` (with ``infeasible`` set) when the search
    proved that no strategy reaches the query.  ``witness_value`` is ``+inf``
    when no feasible point was found.
    """

    certified_lower: float
    witness_value: float
    witness: Optional[QubitStrategy]
    boxes_explored: int
    tolerance: float
    converged: bool = True
    infeasible: bool = False
    mode: str = "certified"
    info: dict = field(default_factory=dict)


def quantum_max_score(theta):
    """Largest score of the honest qubit strategy at overlap ``theta``."""
    t = np.asarray(theta, dtype=float)
    if np.any(t < 0) or np.any(t > 1):
        raise ValueError("theta must lie in [0, 1]")
    out = 0.5 + np.sqrt(t * (1.0 - t))
    return float(out) if out.ndim == 0 else out


def classical_boundary(theta):
    """Score ``(3 - 2 theta)/2`` reachable by classical mixing strategies."""
    t = np.asarray(theta, dtype=float)
    if np.any(t < 0.5) or np.any(t > 1):
        raise ValueError("theta must lie in [1/2, 1]")
    out = (3.0 - 2.0 * t) / 2.0
    return float(out) if out.ndim == 0 else out


def classical_mixing_strategy(theta: float) -> QubitStrategy:
    """Zero-entropy strategy reaching overlap ``theta`` and score ``3/2 - theta``.

    Input 0 sends the ground state, input 1 sends it with weight
    ``2 theta - 1``; every angle is 0, so the objective vanishes.
    """
    if not 0.5 <= theta <= 1.0:
        raise ValueError("theta must lie in [1/2, 1]")
    w = 2.0 * theta - 1.0
    return QubitStrategy(eta=(1.0, w), a_tilde=(1.0, w), xi=(0.0, 0.0), phi_angle=0.0)


def strategy_scores(s: QubitStrategy):
    """Left-hand sides of the score and overlap constraints.

    Returns ``(sum_x (-eta_x + (-1)^x lambda1_x), (sum lambda1)^2 + (sum lambda2)^2)``
    to be compared with ``4 omega - 4`` and ``(4 theta - sum eta)^2``.
    """
    l1 = s.lambda1
    l2 = s.lambda2
    score_lhs = -s.eta[0] - s.eta[1] + l1[0] - l1[1]
    overlap_lhs = (l1[0] + l1[1]) ** 2 + (l2[0] + l2[1]) ** 2
    return score_lhs, overlap_lhs


def is_feasible(s: QubitStrategy, omega: float, theta: float, tol: float = 1e-9) -> bool:
    score_lhs, overlap_lhs = strategy_scores(s)
    rhs = 4.0 * theta - s.eta[0] - s.eta[1]
    return score_lhs >= 4.0 * omega - 4.0 - tol and overlap_lhs >= rhs * rhs - tol


def strategy_entropy(s: QubitStrategy, p0: float, exact: bool = True,
                     order: int = 8) -> float:
    """Objective value of a strategy, with ``Phi`` or its order-``n`` bound."""
    l1 = s.lambda1
    weights = (p0, 1.0 - p0)
    total = 0.0
    for x in range(2):
        a = s.a_tilde[x]
        lam = max(-a, min(a, l1[x]))
        if exact:
            term = max(phi(lam) - phi(a), 0.0)
        else:
            term = float(objective_poly_lower(a, lam, compute_coeffs(order)))
        total += weights[x] * term
    return total


# ---------------------------------------------------------------------------
# vectorised kernels over reduced points u = (a0, xi0, a1, xi1), xi in [0, pi]

def _term(a, lam, objective, coeffs):
    if objective == "exact":
        return np.maximum(np.asarray(phi(lam)) - np.asarray(phi(a)), 0.0)
    return np.asarray(objective_poly_lower(a, np.clip(lam, -a, a), coeffs))


def _point_eval(u, p0, omega, theta, objective, coeffs, slack=_POINT_SLACK):
    """Objective and feasibility (up to ``slack``) of reduced points, shape (N, 4)."""
    a0, x0, a1, x1 = u[:, 0], u[:, 1], u[:, 2], u[:, 3]
    c0, c1 = np.cos(x0), np.cos(x1)
    l10, l11 = a0 * c0, a1 * c1
    l20, l21 = a0 * np.sin(x0), a1 * np.sin(x1)
    R = np.hypot(l10 + l11, l20 + l21)
    ok = R >= 4.0 * theta - 2.0 - slack
    ok &= a0 * (1.0 - c0) + a1 * (1.0 + c1) <= 4.0 * (1.0 - omega) + slack
    ok &= R + l10 - l11 >= 4.0 * (theta + omega) - 4.0 - slack
    val = p0 * _term(a0, l10, objective, coeffs) + (1 - p0) * _term(a1, l11, objective, coeffs)
    return val, ok


def _violation(u, omega, theta):
    a0, x0, a1, x1 = u[:, 0], u[:, 1], u[:, 2], u[:, 3]
    c0, c1 = np.cos(x0), np.cos(x1)
    l10, l11 = a0 * c0, a1 * c1
    R = np.hypot(l10 + l11, a0 * np.sin(x0) + a1 * np.sin(x1))
    g = np.stack([
        R - (4.0 * theta - 2.0),
        4.0 * (1.0 - omega) - a0 * (1.0 - c0) - a1 * (1.0 + c1),
        R + l10 - l11 - (4.0 * (theta + omega) - 4.0),
    ])
    return np.maximum(-g, 0.0).sum(axis=0)


def _box_eval(lo, hi, p0, omega, theta, objective, coeffs):
    """Exact objective minimum over each box and a relaxed feasibility test."""
    a_lo = lo[:, [0, 2]]
    a_hi = hi[:, [0, 2]]
    x_lo = lo[:, [1, 3]]
    x_hi = hi[:, [1, 3]]
    cos_hi = np.cos(x_lo)  # cos decreases on [0, pi]
    cos_lo = np.cos(x_hi)
    s_a, s_b = np.sin(x_lo), np.sin(x_hi)
    sin_hi = np.where((x_lo <= 0.5 * math.pi) & (x_hi >= 0.5 * math.pi), 1.0,
                      np.maximum(s_a, s_b))
    abscos = np.maximum(np.abs(cos_lo), np.abs(cos_hi))
    # per-input minimum at the smallest a and the largest |cos|
    m0 = _term(a_lo[:, 0], a_lo[:, 0] * abscos[:, 0], objective, coeffs)
    m1 = _term(a_lo[:, 1], a_lo[:, 1] * abscos[:, 1], objective, coeffs)
    lb = p0 * m0 + (1 - p0) * m1 - _VALUE_EPS

    p = np.stack([a_lo * cos_lo, a_lo * cos_hi, a_hi * cos_lo, a_hi * cos_hi])
    l1_lo = p.min(axis=0)
    l1_hi = p.max(axis=0)
    s1_lo = l1_lo[:, 0] + l1_lo[:, 1]
    s1_hi = l1_hi[:, 0] + l1_hi[:, 1]
    s1_sq = np.maximum(s1_lo * s1_lo, s1_hi * s1_hi)
    s2 = a_hi[:, 0] * sin_hi[:, 0] + a_hi[:, 1] * sin_hi[:, 1]
    r_max = np.sqrt(s1_sq + s2 * s2)
    eps = _CONSTRAINT_EPS
    ok = r_max >= 4.0 * theta - 2.0 - eps
    b_min = a_lo[:, 0] * (1.0 - cos_hi[:, 0]) + a_lo[:, 1] * (1.0 + cos_lo[:, 1])
    ok &= b_min <= 4.0 * (1.0 - omega) + eps
    ok &= r_max + l1_hi[:, 0] - l1_lo[:, 1] >= 4.0 * (theta + omega) - 4.0 - eps
    return lb, ok


def _reduced_to_strategy(u, omega, theta) -> QubitStrategy:
    """Rebuild ``eta`` (and ``phi``) for a feasible reduced point."""
    a0, x0, a1, x1 = (float(v) for v in u)
    l10, l11 = a0 * math.cos(x0), a1 * math.cos(x1)
    l20, l21 = a0 * math.sin(x0), a1 * math.sin(x1)
    R = math.hypot(l10 + l11, l20 + l21)
    s_lo = max(a0 + a1, 4.0 * theta - R)
    s_hi = min(2.0, 4.0 - 4.0 * omega + l10 - l11)
    s = min(max(0.5 * (s_lo + s_hi), s_lo), 2.0) if s_lo <= s_hi else s_lo
    room0, room1 = 1.0 - a0, 1.0 - a1
    extra = max(s - a0 - a1, 0.0)
    if room0 + room1 > 0:
        e0 = a0 + extra * room0 / (room0 + room1)
        e1 = a1 + extra * room1 / (room0 + room1)
    else:
        e0, e1 = a0, a1
    e0, e1 = min(max(e0, a0), 1.0), min(max(e1, a1), 1.0)
    phi_angle = (-math.atan2(l20 + l21, l10 + l11)) % TWO_PI
    return QubitStrategy(eta=(e0, e1), a_tilde=(a0, a1), xi=(x0, x1), phi_angle=phi_angle)


def _strategy_to_reduced(s: QubitStrategy):
    u = []
    for x in range(2):
        a = s.a_tilde[x]
        c = math.cos(s.xi[x])
        u += [a, math.acos(max(-1.0, min(1.0, c)))]
    return np.array(u)


_LO = np.array([0.0, 0.0, 0.0, 0.0])
_HI = np.array([1.0, math.pi, 1.0, math.pi])
# angles and lengths move the constraints at similar rates
_SCALE = np.ones(4)


def _is_trivial(q: RateQuery) -> bool:
    return q.omega <= 0.5 or q.theta <= 0.5


def _trivial_witness(q: RateQuery) -> QubitStrategy:
    """Zero-objective feasible strategy for omega <= 1/2 or theta <= 1/2."""
    if q.theta <= 0.5:
        # input 1 sends nothing: score side is 0 and overlap side 1 >= (4 theta - 1)^2
        return QubitStrategy(eta=(1.0, 0.0), a_tilde=(1.0, 0.0), xi=(0.0, 0.0), phi_angle=0.0)
    a = 2.0 * q.theta - 1.0
    return QubitStrategy(eta=(1.0, 1.0), a_tilde=(a, a), xi=(0.0, 0.0), phi_angle=0.0)


def _local_solve(u0, p0, omega, theta, objective, coeffs):
    """SLSQP polish in the reduced variables."""

    def f(u):
        v, _ = _point_eval(u[None, :], p0, omega, theta, objective, coeffs)
        return float(v[0])

    def cons(u):
        a0, x0, a1, x1 = u
        c0, c1 = math.cos(x0), math.cos(x1)
        l10, l11 = a0 * c0, a1 * c1
        R = math.hypot(l10 + l11, a0 * math.sin(x0) + a1 * math.sin(x1))
        return np.array([
            R - (4.0 * theta - 2.0),
            4.0 * (1.0 - omega) - a0 * (1.0 - c0) - a1 * (1.0 + c1),
            R + l10 - l11 - (4.0 * (theta + omega) - 4.0),
        ])

    bounds = list(zip(_LO, _HI))
    try:
        res = minimize(f, u0, method="SLSQP", bounds=bounds,
                       constraints=[{"type": "ineq", "fun": cons}],
                       options={"maxiter": 200, "ftol": 1e-12})
        u = np.clip(res.x, _LO, _HI)
    except (ValueError, ArithmeticError):
        return None
    return u


def _heuristic(q: RateQuery, starts: int, objective: str, coeffs, seed: int = 0,
               samples: int = 4096):
    """Best feasible reduced point from low-discrepancy starts plus local polish.

    Returns ``(value, u)`` with ``value = inf`` if nothing feasible was found.
    """
    sob = qmc.Sobol(d=4, scramble=True, seed=seed)
    pool = _LO + sob.random(max(samples, starts)) * (_HI - _LO)
    # pure symmetric pairs, which contain the honest qubit strategy
    alpha = np.linspace(0.0, 0.5 * math.pi, 1025)
    alpha = np.union1d(alpha, [math.acos(min(1.0, max(0.0, 2.0 * q.omega - 1.0)))])
    ones = np.ones_like(alpha)
    sym = np.column_stack([ones, alpha, ones, math.pi - alpha])

    def ranked(pts):
        val, ok = _point_eval(pts, q.p0, q.omega, q.theta, objective, coeffs)
        # feasible points by value first, then the least violating rest
        order = np.lexsort((val, _violation(pts, q.omega, q.theta)))
        return order, np.where(ok, val, np.inf)

    order, fv = ranked(pool)
    sym_order, sym_fv = ranked(sym)
    cand = np.vstack([pool[order[:starts]], sym[sym_order[:min(starts, 4)]]])
    best_val, best_u = math.inf, None
    for u0, fv0 in ((pool, fv), (sym, sym_fv)):
        i = int(np.argmin(fv0))
        if fv0[i] < best_val:
            best_val, best_u = float(fv0[i]), u0[i]
    for u0 in cand:
        u = _local_solve(u0, q.p0, q.omega, q.theta, objective, coeffs)
        if u is None:
            continue
        v, good = _point_eval(u[None, :], q.p0, q.omega, q.theta, objective, coeffs)
        if good[0] and (v[0] < best_val or (v[0] == best_val and tuple(u) < tuple(best_u))):
            best_val, best_u = float(v[0]), u
    return best_val, best_u


def g_lower(q: RateQuery, mode: str = "certified", tol: float = 1e-3, order: int = 8,
            objective: str = "exact", starts: int = 64, max_boxes: int = 2_000_000,
            batch: int = 4096, seed: int = 0,
            upper_hint: Optional[QubitStrategy] = None) -> BoundResult:
    """Lower bound (certified) or witness value (heuristic) at one query.

    Parameters
    ----------
    q : RateQuery
    mode : {"certified", "heuristic"}
    tol : float
        Target gap between certified bound and best witness, in bits.
    order : int
        Polynomial order used when ``objective == "poly"``.
    objective : {"exact", "poly"}
        Interval-evaluate ``Phi`` itself or the order-``n`` polynomial bound.
    starts : int
        Multistart count for the heuristic (the certified mode uses a
        small number of starts only to seed its incumbent).
    max_boxes : int
        Budget on boxes created by branch and bound.
    upper_hint : QubitStrategy, optional
        A strategy known to be feasible, e.g. from a larger query.
    """
    if mode not in ("certified", "heuristic"):
        raise ValueError("mode must be 'certified' or 'heuristic'")
    if objective not in ("exact", "poly"):
        raise ValueError("objective must be 'exact' or 'poly'")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if order < 1:
        raise ValueError("order must be >= 1")
    coeffs = compute_coeffs(order) if objective == "poly" else None

    if _is_trivial(q):
        w = _trivial_witness(q)
        return BoundResult(0.0, 0.0, w, 0, tol, mode=mode)
    if q.omega <= classical_boundary(q.theta):
        w = classical_mixing_strategy(q.theta)
        return BoundResult(0.0, 0.0, w, 0, tol, mode=mode)

    ub, ub_u = math.inf, None
    if upper_hint is not None and is_feasible(upper_hint, q.omega, q.theta, tol=0.0):
        u = _strategy_to_reduced(upper_hint)
        v, good = _point_eval(u[None, :], q.p0, q.omega, q.theta, objective, coeffs)
        if good[0]:
            ub, ub_u = float(v[0]), u

    # the certified search improves its incumbent itself; a sampled seed suffices
    n_starts = starts if mode == "heuristic" else 0
    hv, hu = _heuristic(q, n_starts, objective, coeffs, seed=seed)
    if hv < ub:
        ub, ub_u = hv, hu

    if mode == "heuristic":
        w = _reduced_to_strategy(ub_u, q.omega, q.theta) if ub_u is not None else None
        return BoundResult(0.0, ub, w, 0, tol, converged=ub_u is not None, mode=mode)

    return _branch_and_bound(q, tol, objective, coeffs, ub, ub_u, max_boxes, batch)


def _branch_and_bound(q, tol, objective, coeffs, ub, ub_u, max_boxes, batch):
    p0, om, th = q.p0, q.omega, q.theta
    lo = _LO[None, :].copy()
    hi = _HI[None, :].copy()
    lb, ok = _box_eval(lo, hi, p0, om, th, objective, coeffs)
    lo, hi, lb = lo[ok], hi[ok], lb[ok]
    retired = math.inf
    explored = 1
    while lo.shape[0]:
        # retire boxes that cannot beat the incumbent by more than tol
        keep = lb < ub - tol
        if not np.all(keep):
            retired = min(retired, float(lb[~keep].min()))
            lo, hi, lb = lo[keep], hi[keep], lb[keep]
            if not lo.shape[0]:
                break
        if explored >= max_boxes:
            break
        k = min(batch, lo.shape[0])
        if k < lo.shape[0]:
            sel = np.argpartition(lb, k - 1)[:k]
            mask = np.zeros(lo.shape[0], dtype=bool)
            mask[sel] = True
            plo, phi_, rest = lo[mask], hi[mask], ~mask
            rlo, rhi, rlb = lo[rest], hi[rest], lb[rest]
        else:
            plo, phi_ = lo, hi
            rlo, rhi, rlb = lo[:0], hi[:0], lb[:0]
        width = (phi_ - plo) * _SCALE
        dim = np.argmax(width, axis=1)
        idx = np.arange(k)
        mid = 0.5 * (plo[idx, dim] + phi_[idx, dim])
        lo_a, hi_a = plo.copy(), phi_.copy()
        hi_a[idx, dim] = mid
        lo_b, hi_b = plo.copy(), phi_.copy()
        lo_b[idx, dim] = mid
        clo = np.concatenate([lo_a, lo_b])
        chi = np.concatenate([hi_a, hi_b])
        explored += clo.shape[0]
        clb, cok = _box_eval(clo, chi, p0, om, th, objective, coeffs)
        clo, chi, clb = clo[cok], chi[cok], clb[cok]
        if clo.shape[0]:
            pts = 0.5 * (clo + chi)
            v, good = _point_eval(pts, p0, om, th, objective, coeffs)
            if np.any(good):
                j = int(np.argmin(np.where(good, v, np.inf)))
                if v[j] < ub:
                    ub, ub_u = float(v[j]), pts[j]
        lo = np.concatenate([rlo, clo])
        hi = np.concatenate([rhi, chi])
        lb = np.concatenate([rlb, clb])

    active_min = float(lb.min()) if lo.shape[0] else math.inf
    converged = lo.shape[0] == 0
    cert = min(retired, active_min, ub)
    infeasible = math.isinf(cert) and converged
    if not math.isinf(cert):
        cert = max(cert, 0.0)
    w = _reduced_to_strategy(ub_u, om, th) if ub_u is not None else None
    return BoundResult(cert, ub, w, explored, tol, converged=converged, infeasible=infeasible,
                       info={"active_boxes": int(lo.shape[0])})


def brute_force_grid(q: RateQuery, step: float = 0.02, objective: str = "exact",
                     order: int = 8, chunk: int = 128, extra_angles=()) -> float:
    """Minimum over a dense grid of the full 6-D problem (an upper reference).

    Axes ``eta_x, a_x`` use ``{0, step, ..., 1}`` and ``xi_x`` an equally
    spaced grid of ``[0, 2 pi]``, extended by ``extra_angles``.  Since both constraints see ``eta`` only through
    ``eta_0 + eta_1``, and for grid ``a`` the grid sums with ``eta_x >= a_x`` are
    exactly ``{a_0 + a_1, a_0 + a_1 + step, ..., 2}``, the ``eta`` axes are
    enumerated through that sum.  Returns ``inf`` if no grid point is feasible.
    """
    coeffs = compute_coeffs(order) if objective == "poly" else None
    m = int(round(1.0 / step))
    ang = np.linspace(0.0, TWO_PI, int(round(TWO_PI / step)) + 1)
    ang = np.union1d(ang, np.mod(np.asarray(extra_angles, dtype=float), TWO_PI))
    ia, X = np.meshgrid(np.arange(m + 1), ang, indexing="ij")
    ia, X = ia.ravel(), X.ravel()
    A = ia * step
    L1, L2 = A * np.cos(X), A * np.sin(X)
    T = _term(A, np.clip(L1, -A, A), "exact" if coeffs is None else "poly", coeffs)
    om, th, p0 = q.omega, q.theta, q.p0
    best = math.inf
    tiny = 1e-12
    for start in range(0, A.size, chunk):
        sl = slice(start, start + chunk)
        i0 = ia[sl, None]
        R = np.hypot(L1[sl, None] + L1[None, :], L2[sl, None] + L2[None, :])
        # admissible sums s = k * step with k in [ia0 + ia1, 2m]
        k_lo = np.maximum(i0 + ia[None, :], np.ceil((4.0 * th - R) / step - tiny))
        u = 4.0 - 4.0 * om + L1[sl, None] - L1[None, :]
        k_hi = np.minimum(2 * m, np.floor(u / step + tiny))
        good = k_lo <= k_hi
        if np.any(good):
            val = np.where(good, p0 * T[sl, None] + (1 - p0) * T[None, :], np.inf).min()
            best = min(best, float(val))
    return best
