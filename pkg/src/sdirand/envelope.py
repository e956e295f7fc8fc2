"""Grid-restricted rate surfaces and their convex envelopes.

The envelope of a sampled function is built as a double Legendre-Fenchel
transform.  The 2-D conjugate factorises,

    f*(k1, k2) = max_i [k1 x1_i + max_j (k2 x2_j - f_ij)],

so it is computed with the 1-D linear-time transform along each axis.  The
envelope is kept as its supporting hyperplanes, and evaluation anywhere is the
maximum over them, which is a lower bound on the envelope of the samples.

Samples equal to ``+inf`` mark points outside the feasible set and are
ignored by every transform.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
import csv
import json
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .qubit import RateQuery, g_lower

__all__ = [
    "Gridding",
    "RateSurface",
    "ConvexEnvelope",
    "SolverConfig",
    "grid_floor",
    "grid_floor_index",
    "lf_conjugate_1d",
    "convenv_2d",
    "predecessor_shift",
    "build_F_surface",
    "write_surface_csv",
    "read_surface_csv",
    "write_envelope",
    "read_envelope",
]


@dataclass(frozen=True)
class Gridding:
    """Product grid; each axis strictly increasing with at least two points."""

    axes: tuple

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        if not axes:
            raise ValueError("gridding needs at least one axis")
        for i, a in enumerate(axes):
            if a.ndim != 1 or a.size < 2:
                raise ValueError(f"axis {i} needs at least 2 points")
            if not np.all(np.diff(a) > 0):
                raise ValueError(f"axis {i} must be strictly increasing")
            a.setflags(write=False)
        object.__setattr__(self, "axes", axes)

    @classmethod
    def uniform(cls, lo: float, hi: float, num: int, dims: int = 2) -> "Gridding":
        ax = np.linspace(lo, hi, num)
        return cls(tuple(ax for _ in range(dims)))

    @property
    def shape(self):
        return tuple(a.size for a in self.axes)

    @property
    def ndim(self):
        return len(self.axes)

    def points(self) -> np.ndarray:
        """All grid points, shape ``(prod(shape), ndim)``, C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def to_dict(self):
        return {"axes": [a.tolist() for a in self.axes]}


def grid_floor_index(g: Gridding, x) -> tuple:
    """Index of the largest grid point not exceeding ``x`` in any coordinate."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != g.ndim:
        raise ValueError("point dimension does not match gridding")
    idx = []
    for xi, a in zip(x, g.axes):
        if xi < a[0] or xi > a[-1]:
            raise ValueError(f"point {xi} outside gridded range [{a[0]}, {a[-1]}]")
        idx.append(int(np.searchsorted(a, xi, side="right") - 1))
    return tuple(idx)


def grid_floor(g: Gridding, x) -> tuple:
    """Component-wise floor of ``x`` onto the gridding."""
    return tuple(float(a[i]) for a, i in zip(g.axes, grid_floor_index(g, x)))


def _lower_hull(xs, fs):
    """Indices of the lower convex hull of sorted points (monotone chain)."""
    hull = []
    for i in range(xs.size):
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            # drop i1 if it is on or above the chord from i0 to i
            if (fs[i1] - fs[i0]) * (xs[i] - xs[i0]) >= (fs[i] - fs[i0]) * (xs[i1] - xs[i0]):
                hull.pop()
            else:
                break
        hull.append(i)
    return np.asarray(hull, dtype=int)


def lf_conjugate_1d(xs, fs, slopes) -> np.ndarray:
    """Discrete conjugate ``f*(k) = max_i (k xs_i - fs_i)`` for sorted slopes.

    Runs in ``O(len(xs) + len(slopes))``: the maximiser only moves right as
    the slope grows, so it is found by walking the lower hull once.
    Entries of ``fs`` equal to ``+inf`` are ignored; if none is finite the
    result is ``-inf`` everywhere.
    """
    xs = np.asarray(xs, dtype=float)
    fs = np.asarray(fs, dtype=float)
    ks = np.asarray(slopes, dtype=float)
    if xs.shape != fs.shape or xs.ndim != 1:
        raise ValueError("xs and fs must be 1-D arrays of equal length")
    if ks.ndim != 1:
        raise ValueError("slopes must be 1-D")
    if xs.size > 1 and not np.all(np.diff(xs) > 0):
        raise ValueError("xs must be strictly increasing")
    if ks.size > 1 and not np.all(np.diff(ks) >= 0):
        raise ValueError("slopes must be sorted")
    if np.any(np.isnan(fs)) or np.any(fs == -np.inf):
        raise ValueError("fs must be finite or +inf")
    finite = np.isfinite(fs)
    out = np.full(ks.size, -np.inf)
    if not np.any(finite):
        return out
    hx, hf = xs[finite], fs[finite]
    h = _lower_hull(hx, hf)
    hx, hf = hx[h], hf[h]
    j = 0
    last = hx.size - 1
    for t, k in enumerate(ks):
        while j < last and k * hx[j + 1] - hf[j + 1] >= k * hx[j] - hf[j]:
            j += 1
        out[t] = k * hx[j] - hf[j]
    return out


@dataclass
class RateSurface:
    """Samples of a rate function on an ``(omega, theta)`` gridding.

    ``values[i, j]`` belongs to ``(omega_i, theta_j)``; ``+inf`` marks a
    point proven infeasible.  ``flags`` marks solver points that stopped on
    their budget.
    """

    grid: Gridding
    values: np.ndarray
    p0: float = 0.5
    flags: Optional[np.ndarray] = None
    raw: Optional[np.ndarray] = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.grid.ndim != 2:
            raise ValueError("rate surfaces are 2-D")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid {self.grid.shape}")
        if np.any(np.isnan(self.values)) or np.any(self.values == -np.inf):
            raise ValueError("values must be finite or +inf")
        if self.flags is None:
            self.flags = np.zeros(self.grid.shape, dtype=bool)
        self.flags = np.asarray(self.flags, dtype=bool)
        if self.flags.shape != self.grid.shape:
            raise ValueError("flags shape does not match grid")

    def is_monotone(self, tol: float = 0.0) -> bool:
        v = self.values
        with np.errstate(invalid="ignore"):
            d0 = np.diff(v, axis=0)
            d1 = np.diff(v, axis=1)
        ok0 = np.all(np.isnan(d0) | (d0 >= -tol))
        ok1 = np.all(np.isnan(d1) | (d1 >= -tol))
        return bool(ok0 and ok1)

    def value_at(self, omega: float, theta: float) -> float:
        i, j = grid_floor_index(self.grid, (omega, theta))
        return float(self.values[i, j])


@dataclass(frozen=True)
class ConvexEnvelope:
    """Envelope as ``max_k (k . x + b_k)`` over stored hyperplanes.

    ``slopes`` has shape ``(K, 2)`` and ``intercepts`` shape ``(K,)`` with
    ``b_k = -f*(k)``.  ``domain`` and ``infeasible`` optionally record the
    grid cells whose lower corner was proven infeasible; the function being
    bounded is ``+inf`` there.
    """

    slopes: np.ndarray
    intercepts: np.ndarray
    p0: Optional[float] = None
    domain: Optional[Gridding] = None
    infeasible: Optional[np.ndarray] = None

    def __post_init__(self):
        k = np.asarray(self.slopes, dtype=float).reshape(-1, 2)
        b = np.asarray(self.intercepts, dtype=float).ravel()
        if k.shape[0] != b.shape[0]:
            raise ValueError("one intercept per slope required")
        keep = np.isfinite(b)
        if not np.any(keep):
            raise ValueError("envelope has no finite hyperplane")
        object.__setattr__(self, "slopes", k[keep])
        object.__setattr__(self, "intercepts", b[keep])
        if (self.domain is None) != (self.infeasible is None):
            raise ValueError("domain and infeasible go together")
        if self.infeasible is not None:
            mask = np.asarray(self.infeasible, dtype=bool)
            if mask.shape != self.domain.shape:
                raise ValueError("infeasible mask does not match domain")
            object.__setattr__(self, "infeasible", mask)

    def certified_infeasible(self, omega, theta):
        """True where the query is proven to admit no strategy."""
        om = np.asarray(omega, dtype=float)
        th = np.asarray(theta, dtype=float)
        shape = np.broadcast(om, th).shape
        out = np.zeros(shape, dtype=bool)
        if self.infeasible is None:
            return out
        a0, a1 = self.domain.axes
        om_b = np.broadcast_to(om, shape)
        th_b = np.broadcast_to(th, shape)
        inside = (om_b >= a0[0]) & (th_b >= a1[0]) & (om_b <= a0[-1]) & (th_b <= a1[-1])
        i = np.clip(np.searchsorted(a0, om_b, side="right") - 1, 0, a0.size - 1)
        j = np.clip(np.searchsorted(a1, th_b, side="right") - 1, 0, a1.size - 1)
        out = inside & self.infeasible[i, j]
        return bool(out) if shape == () else out

    @property
    def hyperplanes(self):
        return list(zip(map(tuple, self.slopes), self.intercepts))

    def __call__(self, omega, theta):
        om = np.asarray(omega, dtype=float)
        th = np.asarray(theta, dtype=float)
        shape = np.broadcast(om, th).shape
        pts = np.stack([np.broadcast_to(om, shape).ravel(),
                        np.broadcast_to(th, shape).ravel()], axis=1)
        out = np.empty(pts.shape[0])
        step = max(1, 2_000_000 // max(1, self.slopes.shape[0]))
        for s in range(0, pts.shape[0], step):
            blk = pts[s:s + step]
            out[s:s + step] = (blk @ self.slopes.T + self.intercepts).max(axis=1)
        return float(out[0]) if shape == () else out.reshape(shape)


def _auto_slope_axes(xs1, xs2, vals, num, pad=0.2):
    """Uniform slope axes covering the surface's finite-difference slopes."""
    with np.errstate(invalid="ignore"):
        d1 = np.diff(vals, axis=0) / np.diff(xs1)[:, None]
        d2 = np.diff(vals, axis=1) / np.diff(xs2)[None, :]
    axes = []
    for d in (d1, d2):
        d = d[np.isfinite(d)]
        lo, hi = (float(d.min()), float(d.max())) if d.size else (0.0, 0.0)
        span = max(hi - lo, 1e-9)
        axes.append(np.linspace(lo - pad * span, hi + pad * span, num))
    return axes


def _facet_slopes(xs1, xs2, vals):
    """Gradients of the lower-hull facets of the finite samples."""
    X1, X2 = np.meshgrid(xs1, xs2, indexing="ij")
    m = np.isfinite(vals)
    pts = np.column_stack([X1[m], X2[m], vals[m]])
    if pts.shape[0] < 3:
        return np.empty((0, 2))
    # a point far above makes the hull full-dimensional even for planar data
    span = max(1.0, float(np.ptp(pts[:, 2])))
    apex = np.array([[pts[:, 0].mean(), pts[:, 1].mean(), pts[:, 2].max() + 10.0 * span]])
    try:
        hull = ConvexHull(np.vstack([pts, apex]))
    except (QhullError, ValueError):
        return np.empty((0, 2))
    eq = hull.equations
    low = eq[:, 2] < -1e-12
    n = eq[low]
    k = np.column_stack([-n[:, 0] / n[:, 2], -n[:, 1] / n[:, 2]])
    k = k[np.all(np.isfinite(k), axis=1)]
    return np.unique(np.round(k, 12), axis=0)


def _conjugate_2d(xs1, xs2, vals, k1_axis, k2_axis, extra):
    """``f*`` on the product of slope axes and at extra ``(k1, k2)`` pairs."""
    k2_all = np.unique(np.concatenate([k2_axis, extra[:, 1]]))
    # inner transform along theta for every omega row
    inner = np.stack([lf_conjugate_1d(xs2, vals[i], k2_all) for i in range(xs1.size)])
    # rows without finite samples contribute -inf to the inner sup, i.e. +inf below
    minus_inner = -inner
    pos2 = {float(k): c for c, k in enumerate(k2_all)}
    grid_vals = np.empty((k1_axis.size, k2_axis.size))
    for c, k2 in enumerate(k2_axis):
        grid_vals[:, c] = lf_conjugate_1d(xs1, minus_inner[:, pos2[float(k2)]], k1_axis)
    extra_vals = np.empty(extra.shape[0])
    if extra.shape[0]:
        order = np.lexsort((extra[:, 0], extra[:, 1]))
        e = extra[order]
        start = 0
        while start < e.shape[0]:
            stop = start
            while stop < e.shape[0] and e[stop, 1] == e[start, 1]:
                stop += 1
            col = minus_inner[:, pos2[float(e[start, 1])]]
            extra_vals[order[start:stop]] = lf_conjugate_1d(xs1, col, e[start:stop, 0])
            start = stop
    return grid_vals, extra_vals


def convenv_2d(surface: RateSurface, slope_grid: Optional[Gridding] = None,
               num_slopes: int = 101, facets: bool = True) -> ConvexEnvelope:
    """Convex envelope of a sampled surface as supporting hyperplanes.

    Parameters
    ----------
    surface : RateSurface
    slope_grid : Gridding, optional
        Slope axes ``(k_omega, k_theta)``.  By default they span the
        finite-difference slopes of the surface padded by 20%.
    num_slopes : int
        Points per automatic slope axis.
    facets : bool
        Also use the gradients of the lower-hull facets of the samples.
        With them the envelope is exact at every sample point.
    """
    xs1, xs2 = surface.grid.axes
    vals = surface.values
    if not np.any(np.isfinite(vals)):
        raise ValueError("surface has no finite value")
    if slope_grid is None:
        k1_axis, k2_axis = _auto_slope_axes(xs1, xs2, vals, num_slopes)
    else:
        if slope_grid.ndim != 2:
            raise ValueError("slope grid must be 2-D")
        k1_axis, k2_axis = slope_grid.axes
    extra = _facet_slopes(xs1, xs2, vals) if facets else np.empty((0, 2))
    grid_vals, extra_vals = _conjugate_2d(xs1, xs2, vals, np.asarray(k1_axis),
                                          np.asarray(k2_axis), extra)
    K1, K2 = np.meshgrid(k1_axis, k2_axis, indexing="ij")
    slopes = np.vstack([np.column_stack([K1.ravel(), K2.ravel()]), extra])
    fstar = np.concatenate([grid_vals.ravel(), extra_vals])
    # infeasibility carries over to every larger query
    src = surface.raw if surface.raw is not None else surface.values
    mono = np.maximum.accumulate(np.maximum.accumulate(src, axis=0), axis=1)
    mask = np.isinf(mono)
    return ConvexEnvelope(slopes=slopes, intercepts=-fstar, p0=surface.p0,
                          domain=surface.grid if np.any(mask) else None,
                          infeasible=mask if np.any(mask) else None)


def predecessor_shift(values: np.ndarray) -> np.ndarray:
    """Sample ``S(x) = L(x_-)`` from certified values ``L`` of a monotone function.

    ``L`` is first replaced by its running maximum over the lower-left
    quadrant, which stays a valid bound for a nondecreasing function.
    ``x_-`` is the grid point one step below in every coordinate; points
    on the lowest row or column get 0.  The envelope of ``S`` bounds the
    envelope of the function anywhere in the gridded rectangle.
    """
    v = np.asarray(values, dtype=float)
    mono = np.maximum.accumulate(np.maximum.accumulate(v, axis=0), axis=1)
    out = np.zeros_like(mono)
    out[1:, 1:] = mono[:-1, :-1]
    return out


@dataclass(frozen=True)
class SolverConfig:
    """Settings forwarded to :func:`sdirand.qubit.g_lower`."""

    mode: str = "certified"
    tol: float = 1e-3
    objective: str = "exact"
    order: int = 8
    max_boxes: int = 2_000_000

    def __post_init__(self):
        if self.mode not in ("certified", "heuristic"):
            raise ValueError("mode must be 'certified' or 'heuristic'")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.objective not in ("exact", "poly"):
            raise ValueError("objective must be 'exact' or 'poly'")

    def to_dict(self):
        return asdict(self)


def build_F_surface(p0: float, grid: Gridding, solver_config: Optional[SolverConfig] = None,
                    progress=None):
    """Certified samples on ``grid`` and the convex envelope built from them.

    Returns ``(surface, envelope)``.  ``surface.raw`` holds the solver's
    certified values and ``surface.values`` the shifted samples fed to the
    envelope.  Points that stopped on their budget keep their certified
    bound (still valid) and are marked in ``surface.flags``.  The heuristic
    mode gives no certificate, so its surface is filled with witness values
    and the envelope is only an estimate.
    """
    cfg = solver_config or SolverConfig()
    if grid.ndim != 2:
        raise ValueError("grid must be 2-D over (omega, theta)")
    for a in grid.axes:
        if a[0] < 0 or a[-1] > 1:
            raise ValueError("grid must lie in [0, 1]^2")
    om_ax, th_ax = grid.axes
    raw = np.zeros(grid.shape)
    flags = np.zeros(grid.shape, dtype=bool)
    for i, om in enumerate(om_ax):
        for j, th in enumerate(th_ax):
            q = RateQuery(float(om), float(th), p0)
            r = g_lower(q, mode=cfg.mode, tol=cfg.tol, order=cfg.order,
                        objective=cfg.objective, max_boxes=cfg.max_boxes)
            if cfg.mode == "heuristic":
                raw[i, j] = r.witness_value
            else:
                raw[i, j] = r.certified_lower
                flags[i, j] = not r.converged
            if om <= 0.5 or th <= 0.5:
                raw[i, j] = 0.0
            if progress is not None:
                progress(i, j, r)
    shifted = predecessor_shift(raw)
    surface = RateSurface(grid=grid, values=shifted, p0=p0, flags=flags, raw=raw,
                          config=cfg.to_dict())
    return surface, convenv_2d(surface)


# ---------------------------------------------------------------------------
# serialisation

def _fmt(v: float) -> str:
    return "inf" if math.isinf(v) else repr(float(v))


def write_surface_csv(path, surface: RateSurface, meta: Optional[dict] = None) -> Path:
    """Write ``omega,theta,value`` rows and a ``<path>.meta.json`` sidecar."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["omega", "theta", "value"])
        om_ax, th_ax = surface.grid.axes
        for i, om in enumerate(om_ax):
            for j, th in enumerate(th_ax):
                w.writerow([_fmt(om), _fmt(th), _fmt(surface.values[i, j])])
    side = {
        "kind": "rate_surface",
        "grid": surface.grid.to_dict(),
        "p0": surface.p0,
        "solver_config": surface.config,
        "flagged": [[float(surface.grid.axes[0][i]), float(surface.grid.axes[1][j])]
                    for i, j in zip(*np.nonzero(surface.flags))],
    }
    if surface.raw is not None:
        side["raw"] = [[_fmt(v) for v in row] for row in surface.raw]
    side.update(meta or {})
    Path(str(path) + ".meta.json").write_text(json.dumps(side, indent=2))
    return path


def read_surface_csv(path) -> RateSurface:
    path = Path(path)
    side = json.loads(Path(str(path) + ".meta.json").read_text())
    grid = Gridding(tuple(side["grid"]["axes"]))
    vals = np.full(grid.shape, np.nan)
    with path.open() as fh:
        r = csv.DictReader(fh)
        if r.fieldnames != ["omega", "theta", "value"]:
            raise ValueError(f"unexpected header {r.fieldnames}")
        for row in r:
            i, j = grid_floor_index(grid, (float(row["omega"]), float(row["theta"])))
            vals[i, j] = float(row["value"])
    if np.any(np.isnan(vals)):
        raise ValueError("surface file does not cover its grid")
    flags = np.zeros(grid.shape, dtype=bool)
    for om, th in side.get("flagged", []):
        flags[grid_floor_index(grid, (om, th))] = True
    raw = np.array([[float(v) for v in row] for row in side["raw"]]) if "raw" in side else None
    return RateSurface(grid=grid, values=vals, p0=side["p0"], flags=flags, raw=raw,
                       config=side.get("solver_config", {}))


def write_envelope(path, env: ConvexEnvelope, surface: Optional[RateSurface] = None,
                   meta: Optional[dict] = None) -> Path:
    """Envelope samples as ``omega,theta,value`` plus hyperplanes in the sidecar.

    Samples are written at the surface grid when one is given; the sidecar
    stores every hyperplane so the envelope reloads exactly.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["omega", "theta", "value"])
        if surface is not None:
            om_ax, th_ax = surface.grid.axes
            vals = env(*np.meshgrid(om_ax, th_ax, indexing="ij"))
            for i, om in enumerate(om_ax):
                for j, th in enumerate(th_ax):
                    w.writerow([_fmt(om), _fmt(th), _fmt(vals[i, j])])
    side = {
        "kind": "convex_envelope",
        "p0": env.p0,
        "slopes": env.slopes.tolist(),
        "intercepts": env.intercepts.tolist(),
    }
    if env.domain is not None:
        side["domain"] = env.domain.to_dict()
        side["infeasible"] = env.infeasible.astype(int).tolist()
    if surface is not None:
        side["grid"] = surface.grid.to_dict()
        side["solver_config"] = surface.config
        side["flagged"] = int(surface.flags.sum())
    side.update(meta or {})
    Path(str(path) + ".meta.json").write_text(json.dumps(side))
    return path


def read_envelope(path) -> ConvexEnvelope:
    side = json.loads(Path(str(path) + ".meta.json").read_text())
    if side.get("kind") != "convex_envelope":
        raise ValueError("not an envelope sidecar")
    domain = Gridding(tuple(side["domain"]["axes"])) if "domain" in side else None
    mask = np.array(side["infeasible"], dtype=bool) if "infeasible" in side else None
    return ConvexEnvelope(slopes=np.array(side["slopes"]), intercepts=np.array(side["intercepts"]),
                          p0=side["p0"], domain=domain, infeasible=mask)
