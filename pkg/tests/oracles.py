"""Independent reference computations used by several test modules."""

import numpy as np
from scipy.optimize import linprog


def envelope_lp(points, values, query):
    """Lower convex envelope at ``query`` by the convex-combination LP.

    ``min sum_i mu_i f_i`` over probability vectors ``mu`` with
    ``sum_i mu_i x_i = query``; points with infinite value are excluded.
    """
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    m = np.isfinite(values)
    P, f = points[m], values[m]
    A = np.vstack([P.T, np.ones(P.shape[0])])
    b = np.concatenate([np.asarray(query, dtype=float), [1.0]])
    res = linprog(f, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    return res.fun if res.status == 0 else np.inf


def conjugate_brute(xs, fs, slopes):
    xs, fs = np.asarray(xs), np.asarray(fs)
    m = np.isfinite(fs)
    if not np.any(m):
        return np.full(len(slopes), -np.inf)
    return np.array([np.max(k * xs[m] - fs[m]) for k in slopes])


def tradeoff_lp(axes, H, x_star, c_floor):
    """Primal min-tradeoff LP on a finite rate grid ``H[gamma, omega, theta]``.

    ``max f(x_star)`` over affine ``f`` with ``f(x) <= H(x_-)`` where ``x_-``
    is one step down in omega and theta, and ``f(x) <= c_floor`` on the
    lowest omega and theta layers.  Returns the optimal value.
    """
    g, o, t = (np.asarray(a, dtype=float) for a in axes)
    rows, b = [], []
    for i in range(g.size):
        for j in range(o.size):
            for k in range(t.size):
                rows.append([g[i], o[j], t[k], 1.0])
                b.append(H[i, j - 1, k - 1] if j and k else c_floor)
    cost = -np.concatenate([np.asarray(x_star, dtype=float), [1.0]])
    res = linprog(cost, A_ub=np.array(rows), b_ub=np.array(b), bounds=(None, None),
                  method="highs")
    assert res.status == 0
    return -res.fun
