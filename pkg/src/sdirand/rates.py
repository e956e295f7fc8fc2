"""Asymptotic and finite-size rates for the two spot-checking protocols.

Coordinates of the statistics are ordered ``(gamma, omega, theta)``.  The
single-round rate ``(1 - gamma) F(omega, theta)`` grows with ``omega`` and
``theta`` and is affine in ``gamma``.  The grid-restricted constraints of the
min-tradeoff fit shift by one cell along ``omega`` and ``theta`` only: an
affine ``f`` below an affine rate at ``gamma = 0`` and ``gamma = 1`` is below it
for every ``gamma`` in between.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import itertools
import math
from typing import Callable, Optional, Sequence

import numpy as np

from .entropy import h_bin
from .envelope import ConvexEnvelope, Gridding
from .lp import simplex
from .qubit import quantum_max_score

__all__ = [
    "PROTOCOLS",
    "ProtocolParams",
    "FreqVector",
    "MinTradeoff",
    "stats_from_freq",
    "asymptotic_rate",
    "rate_grid_3d",
    "tradeoff_grid",
    "fit_min_tradeoff",
    "check_tradeoff",
    "default_v",
    "eat_min_entropy",
    "completeness_error",
    "widths_for_split",
    "optimize_widths",
    "net_rate",
    "expansion_curve",
]

PROTOCOLS = ("recycling", "public-input")
ALPHABET = {"recycling": 8, "public-input": 2}
# +1: rate nondecreasing along the axis, shift one cell down; 0: rate affine, no shift
AXIS_DIRECTION = (0, 1, 1)


@dataclass(frozen=True)
class ProtocolParams:
    """Protocol knobs.

    ``protocol`` is ``"recycling"`` (inputs are recycled into the output) or
    ``"public-input"`` (inputs are public and their entropy is charged).
    ``eps_ext`` defaults to ``eps_s``.  Widths may be 0, which makes the
    completeness bound vacuous.
    """

    n: int
    p0: float = 0.5
    gamma: float = 0.1
    theta_exp: float = 0.9
    delta_theta: float = 0.0
    omega_exp: float = 0.8
    delta_omega: float = 0.0
    eps_c: float = 1e-3
    eps_s: float = 1e-6
    protocol: str = "recycling"
    eps_ext: Optional[float] = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        object.__setattr__(self, "n", int(self.n))
        if not 0.0 < self.p0 < 1.0:
            raise ValueError("p0 must be in (0, 1)")
        if not 0.0 < self.gamma <= 0.5:
            raise ValueError("gamma must be in (0, 1/2]")
        if not 0.5 < self.theta_exp <= 1.0:
            raise ValueError("theta_exp must be in (1/2, 1]")
        if not 0.0 <= self.omega_exp <= 1.0:
            raise ValueError("omega_exp must be in [0, 1]")
        if self.delta_theta < 0 or self.delta_omega < 0:
            raise ValueError("widths must be non-negative")
        for name in ("eps_c", "eps_s"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in (0, 1)")
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}")
        if self.eps_ext is None:
            object.__setattr__(self, "eps_ext", self.eps_s)
        if not 0.0 < self.eps_ext < 1.0:
            raise ValueError("eps_ext must be in (0, 1)")

    @property
    def alphabet_size(self) -> int:
        return ALPHABET[self.protocol]

    def replace(self, **kw) -> "ProtocolParams":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(kw)
        return ProtocolParams(**d)


@dataclass(frozen=True)
class FreqVector:
    """Distribution over ``(t, x, y)`` in ``{0, 1}^3``, as an array ``q[t, x, y]``."""

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if isinstance(self.q, dict):
            arr = np.zeros((2, 2, 2))
            for (t, x, y), v in self.q.items():
                arr[t, x, y] = v
            q = arr
        if q.shape != (2, 2, 2):
            raise ValueError("q must have shape (2, 2, 2)")
        if np.any(q < -1e-12) or abs(q.sum() - 1.0) > 1e-9:
            raise ValueError("q must be a probability distribution")
        q = np.clip(q, 0.0, None)
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    def __getitem__(self, key):
        return float(self.q[key])


def stats_from_freq(q: FreqVector, p0: float, gamma: float):
    """``(omega_q, theta_q, gamma_q)`` implied by a distribution over ``(T, X, Y)``."""
    if not (0.0 < p0 < 1.0 and 0.0 < gamma < 1.0):
        raise ValueError("p0 and gamma must lie in (0, 1)")
    p = (p0, 1.0 - p0)
    if min(p) * min(gamma, 1 - gamma) < 1e-300:
        raise ValueError("p0 * gamma underflows")
    omega = q[0, 0, 0] / (2 * (1 - gamma) * p[0]) + q[0, 1, 1] / (2 * (1 - gamma) * p[1])
    theta = q[1, 0, 0] / (2 * gamma * p[0]) + q[1, 1, 0] / (2 * gamma * p[1])
    gamma_q = float(q.q[1].sum())
    return float(omega), float(theta), gamma_q


def _check_p0(envelope: ConvexEnvelope, p0: float):
    if envelope.p0 is not None and abs(envelope.p0 - p0) > 1e-12:
        raise ValueError(f"envelope built for p0={envelope.p0}, asked for p0={p0}")


def asymptotic_rate(protocol: str, envelope: ConvexEnvelope, omega: float, theta: float,
                    gamma: float, p0: float) -> float:
    """Asymptotic bits per round.

    ``r1`` and ``r2_cert`` are ``(1 - gamma) F``; ``r1_noT`` charges the
    input entropy of test rounds and the test flag, ``r2_expansion`` the
    full input entropy.  Values may be negative.
    """
    _check_p0(envelope, p0)
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must be in [0, 1]")
    F = max(float(envelope(omega, theta)), 0.0)
    base = (1.0 - gamma) * F
    if protocol in ("r1", "r2_cert"):
        return base
    if protocol == "r1_noT":
        return base - gamma * h_bin(p0) - h_bin(gamma)
    if protocol == "r2_expansion":
        return base - h_bin(p0) - h_bin(gamma)
    raise ValueError("protocol must be r1, r1_noT, r2_cert or r2_expansion")


# ---------------------------------------------------------------------------
# min-tradeoff functions

@dataclass
class MinTradeoff:
    """Affine ``f(x) = c . x + d`` over ``x = (gamma, omega, theta)``.

    ``max_f`` is the maximum over the unit cube, ``min_q_f`` a lower bound on
    the minimum over quantum-achievable statistics, and ``var_bound`` the
    Bhatia-Davis bound ``(max_f - mu)(mu - min_q_f)`` at ``mu = f(observed)``.
    """

    c: np.ndarray
    d: float
    max_f: float = math.nan
    min_q_f: float = math.nan
    var_bound: float = math.nan
    observed: Optional[tuple] = None
    min_f: float = math.nan
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(3)
        self.d = float(self.d)
        if not math.isnan(self.max_f) and not math.isnan(self.min_q_f):
            if self.max_f < self.min_q_f:
                raise ValueError("max_f must be >= min_q_f")
        if not math.isnan(self.var_bound) and self.var_bound < 0:
            raise ValueError("var_bound must be non-negative")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.c + self.d


def rate_grid_3d(envelope: ConvexEnvelope, grid: Gridding) -> np.ndarray:
    """``(1 - gamma) F(omega, theta)`` on a ``(gamma, omega, theta)`` gridding.

    Queries the envelope proves infeasible get ``+inf``.
    """
    g_ax, o_ax, t_ax = grid.axes
    O, T = np.meshgrid(o_ax, t_ax, indexing="ij")
    F = np.maximum(np.asarray(envelope(O, T)), 0.0)
    # the rate is 0 once either statistic is at most 1/2
    F = np.where((O <= 0.5) | (T <= 0.5), 0.0, F)
    F = np.where(envelope.certified_infeasible(O, T), np.inf, F)
    scale = (1.0 - g_ax)[:, None, None]
    return np.where(np.isinf(F)[None], np.inf, scale * np.where(np.isinf(F), 0.0, F)[None])


def tradeoff_grid(gamma: float, step: float = 0.002) -> Gridding:
    """Default ``(gamma, omega, theta)`` gridding for fitting at test rate ``gamma``.

    ``gamma`` uses ``{0, gamma, 1}``; ``omega`` and ``theta`` use
    ``{0} U {1/2, 1/2 + step, ..., 1}`` (the rate vanishes below 1/2).
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must be in (0, 1)")
    m = int(round(0.5 / step))
    if not math.isclose(m * step, 0.5, rel_tol=0, abs_tol=1e-12):
        raise ValueError("step must divide 1/2")
    ax = np.concatenate([[0.0], 0.5 + step * np.arange(m + 1)])
    return Gridding((np.array([0.0, gamma, 1.0]), ax, ax.copy()))


def _predecessors(shape):
    """Indices, partial predecessors and full-predecessor flags of every grid point.

    The predecessor moves one step towards smaller rate on every shifted
    axis; the partial predecessor does so only on axes where a step exists.
    """
    idx = np.indices(shape).reshape(len(shape), -1).T
    pred = idx.copy()
    has = np.ones(idx.shape[0], dtype=bool)
    for a, direction in enumerate(AXIS_DIRECTION):
        step = idx[:, a] - direction
        ok = (step >= 0) & (step < shape[a])
        has &= ok
        pred[:, a] = np.where(ok, step, idx[:, a])
    return idx, pred, has


def _shifted_constraints(grid: Gridding, H: np.ndarray, c_floor: float):
    """Constraint points and bounds ``f(x) <= b`` of the grid-restricted fit.

    A grid point ``x`` whose predecessor ``x_-`` exists gets ``b = H(x_-)``;
    the others get ``c_floor``.  With ``H`` monotone along the shifted axes
    and affine along the others, this keeps ``f`` below the rate on every
    grid cell.  A point
    is left unconstrained when its partial predecessor is infeasible
    (``H = inf``), since then no cell containing it has a feasible point.
    """
    idx, pred, has = _predecessors(grid.shape)
    hp = H[tuple(pred.T)]
    b = np.where(has, hp, float(c_floor))
    keep = np.isfinite(hp)
    return grid.points()[keep], b[keep], idx[keep]


def _cube_extrema(c, d):
    verts = np.array(list(itertools.product((0.0, 1.0), repeat=3)))
    vals = verts @ c + d
    return float(vals.max()), float(vals.min())


def _min_over_quantum(c, d, gammas, num: int = 101):
    """Lower bound on ``f`` over ``omega <= quantum_max_score(theta)``."""
    th = np.linspace(0.0, 1.0, num)
    qm = np.asarray(quantum_max_score(th))
    frac = np.linspace(0.0, 1.0, num)
    O = frac[None, :] * qm[:, None]
    T = np.broadcast_to(th[:, None], O.shape)
    best = math.inf
    for g in gammas:
        v = c[0] * g + c[1] * O + c[2] * T + d
        best = min(best, float(v.min()))
    # cells of the sample grid: omega spacing <= max qm / (num - 1), theta 1/(num - 1)
    slack = abs(c[1]) * float(qm.max()) / (num - 1) + abs(c[2]) / (num - 1)
    return best - slack


def fit_min_tradeoff(grid: Gridding, H: np.ndarray, observed, c_floor: Optional[float] = None,
                     gamma_protocol: Optional[float] = None) -> MinTradeoff:
    """Affine ``f`` maximising ``f(observed)`` below the grid-restricted rate.

    Parameters
    ----------
    grid : Gridding
        ``(gamma, omega, theta)`` axes.
    H : ndarray
        Rate values on ``grid``; ``+inf`` drops the constraints they define.
    observed : sequence of 3 floats
        The point ``x*`` at which ``f`` is maximised.
    c_floor : float, optional
        Bound used where no predecessor exists; defaults to just below
        ``min(H)``.
    gamma_protocol : float, optional
        Test rate added to the ``gamma`` values scanned for ``min_q_f``.

    The LP is solved in its dual form, a convex-combination problem with
    four equality rows, by :func:`sdirand.lp.simplex`.
    """
    H = np.asarray(H, dtype=float)
    if grid.ndim != 3 or H.shape != grid.shape:
        raise ValueError("need a 3-D gridding and matching rate values")
    x_star = np.asarray(observed, dtype=float).reshape(3)
    for a, v in zip(grid.axes, x_star):
        if not a[0] - 1e-12 <= v <= a[-1] + 1e-12:
            raise ValueError("observed point outside the grid")
    finite = H[np.isfinite(H)]
    if finite.size == 0:
        raise ValueError("rate grid has no finite value")
    if c_floor is None:
        c_floor = float(finite.min()) - 1e-9
    if c_floor > finite.min():
        raise ValueError("c_floor must not exceed the smallest rate value")
    pts, b, _ = _shifted_constraints(grid, H, c_floor)

    # dual: minimise b.y over y >= 0 with sum y = 1 and sum y x_i = x*
    A = np.vstack([pts.T, np.ones(pts.shape[0])])
    rhs = np.concatenate([x_star, [1.0]])
    res = simplex(b, A, rhs)
    if res.status == "infeasible":
        raise ValueError("observed point is not pinned by the grid (LP unbounded)")
    assert res.status == "optimal", "dual LP cannot be unbounded since b is finite"
    y = res.duals
    c, d = y[:3].copy(), float(y[3])
    # remove any rounding-level violation so the fit is exactly feasible
    viol = float((pts @ c + d - b).max())
    if viol > 0:
        d -= viol
    max_f, min_f = _cube_extrema(c, d)
    gammas = sorted({0.0, 1.0, *map(float, grid.axes[0]),
                     *(() if gamma_protocol is None else (float(gamma_protocol),))})
    min_q_f = min(_min_over_quantum(c, d, gammas), max_f)
    mu = float(x_star @ c + d)
    var = max(0.0, (max_f - mu) * (mu - min(min_q_f, mu)))
    return MinTradeoff(c=c, d=d, max_f=max_f, min_q_f=min_q_f, var_bound=var,
                       observed=tuple(x_star), min_f=min_f,
                       info={"lp_value": res.value, "iterations": res.iterations,
                             "c_floor": c_floor, "constraints": int(pts.shape[0])})


def check_tradeoff(f: MinTradeoff, grid: Gridding, H: np.ndarray) -> float:
    """Largest ``f(x_-) - H(x)`` over grid points with a predecessor (<= 0 if valid)."""
    idx, pred, has = _predecessors(grid.shape)
    idx, pred = idx[has], pred[has]
    xp = np.column_stack([grid.axes[a][pred[:, a]] for a in range(3)])
    hv = H[tuple(idx.T)]
    m = np.isfinite(hv)
    return float((f(xp[m]) - hv[m]).max()) if np.any(m) else -math.inf


# ---------------------------------------------------------------------------
# finite size

def default_v(f: MinTradeoff, eps_s: float, alphabet_size: int) -> float:
    """Second-order coefficient ``2 (log2(1 + 2|A|) + ceil(max_f - min_q_f)) sqrt(1 - 2 log2 eps_s)``."""
    spread = math.ceil(max(f.max_f - f.min_q_f, 0.0))
    return 2.0 * (math.log2(1 + 2 * alphabet_size) + spread) * math.sqrt(1 - 2 * math.log2(eps_s))


def accepted_rate(params: ProtocolParams, f: MinTradeoff) -> float:
    """Smallest value of ``f`` on the accepted region at the protocol ``gamma``.

    The accepted region is ``omega >= omega_exp - delta_omega`` and
    ``theta >= theta_exp - delta_theta``; an affine function attains its
    minimum over that box at a vertex.
    """
    om = max(params.omega_exp - params.delta_omega, 0.0)
    th = max(params.theta_exp - params.delta_theta, 0.0)
    verts = np.array([[params.gamma, a, b] for a in (om, 1.0) for b in (th, 1.0)])
    return float(f(verts).min())


def eat_min_entropy(params: ProtocolParams, f: MinTradeoff,
                    v_formula: Callable = default_v) -> float:
    """``n r - sqrt(n) v`` with ``r`` the worst accepted value of ``f``."""
    r = accepted_rate(params, f)
    v = v_formula(f, params.eps_s, params.alphabet_size)
    out = params.n * r - math.sqrt(params.n) * v
    assert abs(out / params.n - r + v / math.sqrt(params.n)) <= 1e-9 * max(1.0, abs(r), v)
    return out


def _p_small(p0: float) -> float:
    return min(p0, 1.0 - p0)


def completeness_error(params: ProtocolParams) -> float:
    """Union bound ``exp(-8n(dT g p)^2) + exp(-8n(dW (1-g) p)^2)``, ``p = min(p0, 1-p0)``."""
    n, g, p = params.n, params.gamma, _p_small(params.p0)
    t1 = math.exp(-8.0 * n * (params.delta_theta * g * p) ** 2)
    t2 = math.exp(-8.0 * n * (params.delta_omega * (1.0 - g) * p) ** 2)
    return t1 + t2


def _width_for(term: float, n: int, scale: float) -> float:
    """Smallest width ``w`` with ``exp(-8 n (w scale)^2) <= term``."""
    if term >= 1.0:
        return 0.0
    return math.sqrt(math.log(1.0 / term) / (8.0 * n)) / scale


def widths_for_split(params: ProtocolParams, eps: float, t: float):
    """Widths spending ``t eps`` on the overlap term and the rest on the score term."""
    p = _p_small(params.p0)
    g = params.gamma
    return (_width_for((1.0 - t) * eps, params.n, (1.0 - g) * p),
            _width_for(t * eps, params.n, g * p))


def optimize_widths(params: ProtocolParams, envelope: ConvexEnvelope,
                    eps_c_target: Optional[float] = None, num: int = 2001):
    """Widths ``(delta_omega, delta_theta)`` maximising ``F(omega_exp - dW, theta_exp - dT)``.

    Only pairs meeting ``completeness_error <= eps_c_target`` with equality
    (or with zero widths when the target is vacuous) can be optimal, since
    ``F`` is nondecreasing; they are parametrised by the share ``t`` of the
    error budget given to the overlap term, scanned on a grid and refined by
    golden section.  Returns ``None`` when the point leaves the domain for
    every split.
    """
    eps = params.eps_c if eps_c_target is None else float(eps_c_target)
    if eps <= 0:
        raise ValueError("eps_c_target must be positive")
    if eps >= 2.0:
        return 0.0, 0.0

    def score(t):
        dw, dt = widths_for_split(params, eps, t)
        om, th = params.omega_exp - dw, params.theta_exp - dt
        if om < 0.0 or th < 0.0:
            return -math.inf, dw, dt
        return float(envelope(om, th)) if om > 0.5 and th > 0.5 else 0.0, dw, dt

    ts = np.linspace(0.0, 1.0, num)[1:-1]
    vals = [score(t) for t in ts]
    best = max(range(len(ts)), key=lambda i: (vals[i][0], -vals[i][1]))
    if vals[best][0] == -math.inf:
        return None
    # golden section between neighbours of the best grid point
    a = ts[max(best - 1, 0)]
    b = ts[min(best + 1, len(ts) - 1)]
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    x1, x2 = b - gr * (b - a), a + gr * (b - a)
    f1, f2 = score(x1)[0], score(x2)[0]
    for _ in range(60):
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - gr * (b - a)
            f1 = score(x1)[0]
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + gr * (b - a)
            f2 = score(x2)[0]
    cands = [vals[best], score(x1), score(x2)]
    v, dw, dt = max(cands, key=lambda r: (r[0], -r[1]))
    return dw, dt


def net_rate(params: ProtocolParams, f: MinTradeoff, v_formula: Callable = default_v) -> float:
    """Extractable bits per round after the EAT penalty and extraction loss.

    The public-input protocol is additionally charged ``h(p0) + h(gamma)``
    per round for its inputs.
    """
    h = eat_min_entropy(params, f, v_formula)
    h -= 2.0 * math.log2(1.0 / params.eps_ext)
    if params.protocol == "public-input":
        h -= params.n * (h_bin(params.p0) + h_bin(params.gamma))
    return h / params.n


def expansion_curve(base: ProtocolParams, ns: Sequence[int], envelope: ConvexEnvelope,
                    device_point=None, v_formula: Callable = default_v,
                    grid: Optional[Gridding] = None):
    """Net rate against the number of rounds.

    For every ``n`` the widths are optimised, a min-tradeoff function is
    fitted at the worst accepted point, and :func:`net_rate` is evaluated.
    ``device_point`` ``(omega, theta)`` overrides the expected statistics.
    Returns a list of dicts with keys ``n, net_rate, rate_asymptotic,
    delta_omega, delta_theta, eps_c, eps_s``; ``net_rate`` is ``-inf`` when
    no widths meet the completeness target.
    """
    _check_p0(envelope, base.p0)
    if device_point is not None:
        base = base.replace(omega_exp=float(device_point[0]), theta_exp=float(device_point[1]))
    grid = grid or tradeoff_grid(base.gamma)
    H = rate_grid_3d(envelope, grid)
    asym = asymptotic_rate("r1", envelope, base.omega_exp, base.theta_exp, base.gamma, base.p0)
    if base.protocol == "public-input":
        asym -= h_bin(base.p0) + h_bin(base.gamma)
    out = []
    for n in ns:
        p = base.replace(n=int(n))
        w = optimize_widths(p, envelope)
        row = {"n": int(n), "rate_asymptotic": asym, "eps_c": p.eps_c, "eps_s": p.eps_s}
        if w is None:
            row.update(net_rate=-math.inf, delta_omega=math.nan, delta_theta=math.nan)
            out.append(row)
            continue
        dw, dt = w
        p = p.replace(delta_omega=dw, delta_theta=dt)
        x_w = (p.gamma, max(p.omega_exp - dw, 0.0), max(p.theta_exp - dt, 0.0))
        f = fit_min_tradeoff(grid, H, x_w, gamma_protocol=p.gamma)
        row.update(net_rate=net_rate(p, f, v_formula), delta_omega=dw, delta_theta=dt)
        out.append(row)
    return out
