"""Dense two-phase simplex for small equality-form linear programs.

Solves ``min c.x  s.t.  A x = b, x >= 0``.  Pricing is by most negative
reduced cost, with Bland's rule after a run of degenerate pivots so the
method always terminates.  Intended for problems with a handful of rows
and many columns; the tableau is stored densely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LPResult", "simplex"]


@dataclass
class LPResult:
    """Outcome of :func:`simplex`.

    Attributes
    ----------
    status : str
        ``"optimal"``, ``"infeasible"`` or ``"unbounded"``.
    x : ndarray or None
        Primal solution.
    value : float
        Objective value (``inf`` if infeasible, ``-inf`` if unbounded).
    duals : ndarray or None
        Multipliers ``y`` with ``A.T y <= c`` and ``b.y == value``.
    basis : ndarray or None
        Column indices of the final basis.
    iterations : int
    """

    status: str
    x: np.ndarray | None
    value: float
    duals: np.ndarray | None
    basis: np.ndarray | None
    iterations: int


def _pivot(T, r, s):
    T[r] /= T[r, s]
    col = T[:, s].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _run(T, basis, n_cols, tol, max_iter, it, degenerate_limit=50):
    """Simplex iterations on tableau ``T`` whose last row is the cost row.

    Entering columns follow the most negative reduced cost; after
    ``degenerate_limit`` consecutive degenerate pivots Bland's rule takes
    over until progress resumes, which rules out cycling.
    """
    m = T.shape[0] - 1
    stall = 0
    while True:
        if it >= max_iter:
            raise RuntimeError("simplex iteration limit reached")
        red = T[-1, :n_cols]
        cand = np.nonzero(red < -tol)[0]
        if cand.size == 0:
            return "optimal", it
        s = int(cand[0]) if stall >= degenerate_limit else int(cand[np.argmin(red[cand])])
        col = T[:m, s]
        pos = col > tol
        if not np.any(pos):
            return "unbounded", it
        ratio = np.full(m, np.inf)
        ratio[pos] = T[:m, -1][pos] / col[pos]
        best = ratio.min()
        ties = np.nonzero(ratio <= best + tol * max(1.0, abs(best)))[0]
        # Bland: leaving row with the smallest basic index among ties
        r = int(ties[np.argmin(basis[ties])])
        stall = stall + 1 if best <= tol else 0
        _pivot(T, r, s)
        basis[r] = s
        it += 1


def simplex(c, A, b, tol: float = 1e-11, max_iter: int = 100_000) -> LPResult:
    """Minimise ``c.x`` subject to ``A x = b`` and ``x >= 0``.

    Parameters
    ----------
    c : array_like, shape (n,)
    A : array_like, shape (m, n)
    b : array_like, shape (m,)
    tol : float
        Pivoting and optimality tolerance.
    max_iter : int
        Total pivot budget over both phases.
    """
    c = np.asarray(c, dtype=float)
    A = np.array(A, dtype=float, copy=True)
    b = np.array(b, dtype=float, copy=True)
    m, n = A.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("dimension mismatch between c, A and b")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
        raise ValueError("LP data must be finite")
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    # phase 1 tableau: [A | I | b], cost row minimises the artificial sum
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = np.arange(n, n + m)
    status, it = _run(T, basis, n + m, tol, max_iter, 0)
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    if -T[-1, -1] > 1e-9 * scale:
        return LPResult("infeasible", None, np.inf, None, None, it)

    # drive remaining zero-level artificials out of the basis
    keep = np.ones(m, dtype=bool)
    for r in range(m):
        if basis[r] >= n:
            nz = np.nonzero(np.abs(T[r, :n]) > 1e-9)[0]
            if nz.size:
                _pivot(T, r, int(nz[0]))
                basis[r] = int(nz[0])
                it += 1
            else:
                keep[r] = False  # redundant row
    rows = np.nonzero(keep)[0]

    # phase 2 on the original columns
    T2 = np.zeros((rows.size + 1, n + 1))
    T2[:-1, :n] = T[rows, :n]
    T2[:-1, -1] = T[rows, -1]
    basis2 = basis[rows].copy()
    T2[-1, :n] = c
    for r, j in enumerate(basis2):
        T2[-1] -= c[j] * T2[r]
    status, it = _run(T2, basis2, n, tol, max_iter, it)
    if status == "unbounded":
        return LPResult("unbounded", None, -np.inf, None, basis2, it)

    x = np.zeros(n)
    x[basis2] = T2[:-1, -1]
    # multipliers from the basis of the original system
    B = A[np.ix_(rows, basis2)]
    y_rows = np.linalg.solve(B.T, c[basis2])
    y = np.zeros(m)
    y[rows] = y_rows
    y[neg] *= -1.0
    return LPResult("optimal", x, float(c @ x), y, basis2, it)
