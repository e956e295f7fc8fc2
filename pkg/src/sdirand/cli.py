"""Command-line front end.

Subcommands ``gfunc``, ``rates``, ``finite``, ``simulate``, ``extract`` and
``tradeoff``.  Settings resolve as flags over a JSON config file over
built-in defaults.  Exit codes: 0 success, 2 protocol abort, 3
configuration error, 4 solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
from pathlib import Path
import sys

import numpy as np

from .cache import cache_key, load_or_build
from .envelope import Gridding, SolverConfig
from .extractor import block_seed_length, extract_blocks, output_length, read_bits, write_bits
from .qubit import quantum_max_score
from .rates import (
    ProtocolParams,
    asymptotic_rate,
    check_tradeoff,
    default_v,
    eat_min_entropy,
    expansion_curve,
    fit_min_tradeoff,
    net_rate,
    optimize_widths,
    rate_grid_3d,
    tradeoff_grid,
    widths_for_split,
)
from .simulator import (
    DeviceModel,
    effective_score,
    read_transcript_csv,
    run_protocol,
    write_summary,
    write_transcript_csv,
)

__all__ = ["main", "EXIT_OK", "EXIT_ABORT", "EXIT_CONFIG", "EXIT_SOLVER",
           "GFUNC_HEADER", "RATES_HEADER", "FINITE_HEADER", "TABLE_HEADER"]

EXIT_OK, EXIT_ABORT, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3, 4

GFUNC_HEADER = ["omega", "theta", "value", "feasible"]
RATES_HEADER = ["omega", "theta", "protocol", "rate"]
FINITE_HEADER = ["n", "gamma", "net_rate"]
TABLE_HEADER = ["n", "rate_net", "rate_asymptotic", "delta_omega", "delta_theta", "eps_c", "eps_s"]
RATE_KINDS = ("r1", "r1_noT", "r2_cert", "r2_expansion")

KEYS = {
    "p0", "gamma", "theta", "omega", "theta_exp", "omega_exp", "n", "grid", "eps_c", "eps_s",
    "eps_ext", "seed", "out", "mode", "tol", "max_boxes", "protocol", "delta_theta",
    "delta_omega", "kind", "detection_efficiency", "cache_dir", "transcript", "input",
    "seed_file", "report", "strict", "table",
}

DEFAULTS = {
    "p0": 0.5, "grid": 51, "mode": "certified", "tol": 1e-3, "max_boxes": 2_000_000,
    "eps_c": 1e-3, "eps_s": 1e-6, "protocol": "recycling", "kind": "qubit",
    "detection_efficiency": 1.0, "strict": False,
}
COMMAND_DEFAULTS = {
    "gfunc": {},
    "rates": {"gamma": 0.0},
    "finite": {"gamma": "0.1,0.01", "theta": 0.9, "n": "3:10:4"},
    "simulate": {"gamma": 0.1, "theta": 0.9, "n": 100_000},
    "tradeoff": {"gamma": 0.1, "theta": 0.9, "n": 100_000},
    "extract": {},
}


class ConfigError(ValueError):
    pass


class SolverError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration

def _floats(v):
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    if isinstance(v, str):
        return [float(x) for x in v.split(",") if x.strip()]
    return [float(v)]


def _one(v, name):
    vals = _floats(v)
    if len(vals) != 1:
        raise ConfigError(f"{name} takes a single value")
    return vals[0]


def _ns(v):
    """``"lo:hi:k"`` is ``k`` points per decade from ``10**lo`` to ``10**hi``."""
    if isinstance(v, str) and ":" in v:
        lo, hi, k = (float(x) for x in v.split(":"))
        num = int(round((hi - lo) * k)) + 1
        return sorted({int(round(10 ** e)) for e in np.linspace(lo, hi, num)})
    return [int(x) for x in _floats(v)]


def _grid(v) -> Gridding:
    if isinstance(v, str) and ":" in v:
        lo, hi, num = v.split(":")
        return Gridding.uniform(float(lo), float(hi), int(num))
    num = int(v)
    if num < 2:
        raise ConfigError("grid needs at least 2 points per axis")
    return Gridding.uniform(0.5, 1.0, num)


def resolve(command: str, args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    cfg.update(COMMAND_DEFAULTS[command])
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a flat JSON object")
        unknown = set(doc) - KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(doc)
    for k, v in vars(args).items():
        if k in KEYS and v is not None and v is not False:
            cfg[k] = v
    return cfg


def _solver(cfg) -> SolverConfig:
    return SolverConfig(mode=cfg["mode"], tol=float(cfg["tol"]), max_boxes=int(cfg["max_boxes"]))


def _envelope(cfg, p0=None):
    p0 = float(cfg["p0"] if p0 is None else p0)
    grid, solver = _grid(cfg["grid"]), _solver(cfg)
    surface, env, hit = load_or_build(p0, grid, solver, cfg.get("cache_dir"))
    _log(f"envelope p0={p0} grid={grid.shape} key={cache_key(p0, grid, solver)} "
         f"{'cached' if hit else 'built'}")
    return surface, env


def _seed(cfg) -> tuple:
    if cfg.get("seed") is not None:
        return int(cfg["seed"]), False
    return int.from_bytes(os.urandom(8), "little") >> 1, True


def _params(cfg, **over) -> ProtocolParams:
    theta = _one(cfg.get("theta_exp", cfg.get("theta")), "theta")
    kw = dict(
        n=over["n"] if "n" in over else int(_one(cfg["n"], "n")), p0=float(cfg["p0"]),
        gamma=over["gamma"] if "gamma" in over else _one(cfg["gamma"], "gamma"),
        theta_exp=theta, eps_c=float(cfg["eps_c"]), eps_s=float(cfg["eps_s"]),
        protocol=cfg["protocol"],
        eps_ext=None if cfg.get("eps_ext") is None else float(cfg["eps_ext"]),
        delta_theta=float(cfg.get("delta_theta") or 0.0),
        delta_omega=float(cfg.get("delta_omega") or 0.0),
    )
    om = cfg.get("omega_exp", cfg.get("omega"))
    kw["omega_exp"] = float(quantum_max_score(theta)) if om is None else _one(om, "omega")
    kw.update(over)
    return ProtocolParams(**kw)


def _log(msg):
    print(msg, file=sys.stderr)


def _fmt(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _writer(out):
    if out in (None, "-"):
        return sys.stdout, False
    return open(out, "w", newline=""), True


# ---------------------------------------------------------------------------
# commands

def cmd_gfunc(cfg) -> int:
    """Certified lower bounds on the raw rate function, one row per grid point."""
    surface, _ = _envelope(cfg)
    om_ax, th_ax = surface.grid.axes
    fh, close = _writer(cfg.get("out"))
    try:
        w = csv.writer(fh)
        w.writerow(GFUNC_HEADER)
        for i, om in enumerate(om_ax):
            for j, th in enumerate(th_ax):
                v = surface.raw[i, j]
                w.writerow([_fmt(om), _fmt(th), _fmt(v), int(np.isfinite(v))])
    finally:
        if close:
            fh.close()
    flagged = [[float(om_ax[i]), float(th_ax[j])] for i, j in zip(*np.nonzero(surface.flags))]
    if cfg.get("out") not in (None, "-"):
        Path(str(cfg["out"]) + ".meta.json").write_text(json.dumps(
            {"p0": surface.p0, "grid": surface.grid.to_dict(), "solver_config": surface.config,
             "flagged": flagged}, indent=2))
    if flagged:
        _log(f"{len(flagged)} points stopped on their budget (bounds still valid)")
        if cfg.get("strict"):
            return EXIT_SOLVER
    return EXIT_OK


def cmd_rates(cfg) -> int:
    """Asymptotic rates of every protocol variant along the feasible grid."""
    surface, env = _envelope(cfg)
    om_ax, th_ax = surface.grid.axes
    gamma = _one(cfg["gamma"], "gamma")
    p0 = float(cfg["p0"])
    thetas = th_ax if cfg.get("theta") is None else _floats(cfg["theta"])
    omegas = om_ax if cfg.get("omega") is None else _floats(cfg["omega"])
    fh, close = _writer(cfg.get("out"))
    try:
        w = csv.writer(fh)
        w.writerow(RATES_HEADER)
        for th in thetas:
            for om in omegas:
                if om > quantum_max_score(th) + 1e-12 or env.certified_infeasible(om, th):
                    continue
                for kind in RATE_KINDS:
                    r = asymptotic_rate(kind, env, float(om), float(th), gamma, p0)
                    w.writerow([_fmt(om), _fmt(th), kind, _fmt(r)])
    finally:
        if close:
            fh.close()
    return EXIT_OK


def _crossover(base, env, grid, ns, rows, steps=6):
    """Smallest sampled sign change of the net rate, refined by bisection in ``log n``."""
    for a, b in zip(rows, rows[1:]):
        if a["net_rate"] <= 0 < b["net_rate"]:
            lo, hi = math.log10(a["n"]), math.log10(b["n"])
            for _ in range(steps):
                mid = 0.5 * (lo + hi)
                r = expansion_curve(base, [int(round(10 ** mid))], env, grid=grid)[0]
                lo, hi = (lo, mid) if r["net_rate"] > 0 else (mid, hi)
            return int(math.ceil(10 ** hi))
    if rows and rows[0]["net_rate"] > 0:
        return rows[0]["n"]
    return math.nan


def cmd_finite(cfg) -> int:
    """Net rate against ``n`` for each test rate, with a crossover summary row."""
    _, env = _envelope(cfg)
    gammas = _floats(cfg["gamma"])
    ns = _ns(cfg["n"])
    out = cfg.get("out")
    fh, close = _writer(out)
    try:
        w = csv.writer(fh)
        w.writerow(FINITE_HEADER)
        summary = []
        for g in gammas:
            base = _params(cfg, n=ns[0], gamma=g)
            grid = tradeoff_grid(g)
            rows = expansion_curve(base, ns, env, grid=grid)
            for r in rows:
                w.writerow([r["n"], _fmt(g), _fmt(r["net_rate"])])
            summary.append((g, _crossover(base, env, grid, ns, rows)))
            if out not in (None, "-"):
                stem = Path(out)
                table = stem.with_name(f"{stem.stem}_gamma{g:g}_table.csv")
                with table.open("w", newline="") as tf:
                    tw = csv.writer(tf)
                    tw.writerow(TABLE_HEADER)
                    for r in rows:
                        tw.writerow([r["n"], _fmt(r["net_rate"]), _fmt(r["rate_asymptotic"]),
                                     _fmt(r["delta_omega"]), _fmt(r["delta_theta"]),
                                     _fmt(r["eps_c"]), _fmt(r["eps_s"])])
        for g, n_star in summary:
            w.writerow(["crossover", _fmt(g), _fmt(n_star)])
    finally:
        if close:
            fh.close()
    return EXIT_OK


def _device(cfg) -> DeviceModel:
    theta = _one(cfg["theta"], "theta")
    extra = {}
    if cfg["kind"] == "custom_table":
        if cfg.get("table") is None:
            raise ConfigError("custom_table needs a 'table' entry in the config file")
        extra["table"] = tuple(_floats(cfg["table"]))
    return DeviceModel(kind=cfg["kind"], theta=theta,
                       detection_efficiency=float(cfg["detection_efficiency"]), extra=extra)


def cmd_simulate(cfg) -> int:
    """Run the protocol once; abort yields exit code 2."""
    model = _device(cfg)
    seed, drawn = _seed(cfg)
    omega_exp = cfg.get("omega_exp", cfg.get("omega"))
    omega_exp = effective_score(model) if omega_exp is None else _one(omega_exp, "omega")
    params = _params(cfg, omega_exp=omega_exp)
    if cfg.get("delta_theta") is None and cfg.get("delta_omega") is None:
        dw, dt = widths_for_split(params, params.eps_c, 0.5)
        params = params.replace(delta_omega=dw, delta_theta=dt)
    transcript, scores, aborted = run_protocol(params, model, seed)
    out = Path(cfg.get("out") or "transcript.csv")
    write_transcript_csv(out, transcript)
    reason = None
    if aborted:
        parts = []
        if scores.theta_hash < params.theta_exp - params.delta_theta:
            parts.append(f"theta_hash {scores.theta_hash:.6f} < {params.theta_exp - params.delta_theta:.6f}")
        if scores.omega_hash < params.omega_exp - params.delta_omega:
            parts.append(f"omega_hash {scores.omega_hash:.6f} < {params.omega_exp - params.delta_omega:.6f}")
        reason = "; ".join(parts)
    extra = {"seed": seed, "seed_from_os_entropy": drawn, "abort_reason": reason,
             "params": {k: getattr(params, k) for k in params.__dataclass_fields__},
             "device": {"kind": model.kind, "theta": model.theta,
                        "detection_efficiency": model.detection_efficiency}}
    write_summary(str(out) + ".summary.json", scores, aborted, extra)
    _log(f"seed={seed} theta_hash={scores.theta_hash:.6f} omega_hash={scores.omega_hash:.6f}")
    if aborted:
        _log(f"protocol aborted: {reason}")
        return EXIT_ABORT
    return EXIT_OK


def _load_summary(transcript):
    path = Path(str(transcript) + ".summary.json")
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read run summary {path}: {exc}") from exc


def cmd_tradeoff(cfg) -> int:
    """Fit the min-tradeoff function for a run and budget the extractor output."""
    if cfg.get("transcript"):
        summary = _load_summary(cfg["transcript"])
        if summary["aborted"]:
            _log(f"run aborted: {summary['abort_reason']}")
            return EXIT_ABORT
        params = ProtocolParams(**summary["params"])
        cfg = dict(cfg, p0=params.p0)
    else:
        params = _params(cfg)
        if cfg.get("delta_theta") is None and cfg.get("delta_omega") is None:
            _, env0 = _envelope(cfg)
            w = optimize_widths(params, env0)
            if w is None:
                raise ConfigError("no widths meet the completeness target")
            params = params.replace(delta_omega=w[0], delta_theta=w[1])
    _, env = _envelope(cfg, params.p0)
    grid = tradeoff_grid(params.gamma)
    H = rate_grid_3d(env, grid)
    x_w = (params.gamma, max(params.omega_exp - params.delta_omega, 0.0),
           max(params.theta_exp - params.delta_theta, 0.0))
    try:
        f = fit_min_tradeoff(grid, H, x_w, gamma_protocol=params.gamma)
    except RuntimeError as exc:
        raise SolverError(str(exc)) from exc
    h_min = eat_min_entropy(params, f)
    m = min(output_length(max(h_min, 0.0), params.eps_ext), 3 * params.n)
    report = {
        "c": f.c.tolist(), "d": f.d, "max_f": f.max_f, "min_q_f": f.min_q_f,
        "var_bound": f.var_bound, "observed": list(f.observed), "f_observed": float(f(x_w)),
        "max_violation": check_tradeoff(f, grid, H), "lp": f.info,
        "v": default_v(f, params.eps_s, params.alphabet_size), "h_min": h_min,
        "net_rate": net_rate(params, f), "input_len": 3 * params.n, "output_len": m,
        "params": {k: getattr(params, k) for k in params.__dataclass_fields__},
    }
    out = cfg.get("out")
    text = json.dumps(report, indent=2)
    if out in (None, "-"):
        print(text)
    else:
        Path(out).write_text(text)
    return EXIT_OK


def cmd_extract(cfg) -> int:
    """Hash a run's raw ``(X, Y, T)`` bits with a Toeplitz matrix."""
    if cfg.get("transcript"):
        summary = _load_summary(cfg["transcript"])
        if summary["aborted"]:
            _log(f"run aborted, nothing extracted: {summary['abort_reason']}")
            return EXIT_ABORT
        bits = read_transcript_csv(cfg["transcript"]).output_bits()
    elif cfg.get("input"):
        bits = read_bits(cfg["input"])
    else:
        raise ConfigError("extract needs --transcript or --input")
    if cfg.get("report"):
        m = int(json.loads(Path(cfg["report"]).read_text())["output_len"])
    elif cfg.get("n") is not None:
        m = int(_one(cfg["n"], "n"))
    else:
        raise ConfigError("extract needs --report or an output length via --n")
    if m > bits.size:
        raise ConfigError("output length exceeds input length")
    out = Path(cfg.get("out") or "extracted.bin")
    seed_note = {}
    if m and cfg.get("seed_file"):
        seed_bits = read_bits(cfg["seed_file"])
    elif m:
        seed, drawn = _seed(cfg)
        rng = np.random.Generator(np.random.PCG64(seed))
        seed_bits = rng.integers(0, 2, block_seed_length(bits.size, m), dtype=np.uint8)
        seed_note = {"seed": seed, "seed_from_os_entropy": drawn}
    if m == 0:
        _log("certified output length is 0; writing an empty bitstream")
        write_bits(out, np.zeros(0, dtype=np.uint8))
        return EXIT_OK
    outbits = extract_blocks(bits, seed_bits, m)
    write_bits(out, outbits)
    _log(json.dumps({"input_len": int(bits.size), "output_len": m, **seed_note}))
    return EXIT_OK


COMMANDS = {"gfunc": cmd_gfunc, "rates": cmd_rates, "finite": cmd_finite,
            "simulate": cmd_simulate, "extract": cmd_extract, "tradeoff": cmd_tradeoff}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--p0", type=float)
    common.add_argument("--gamma", help="test rate; comma-separated list for finite")
    common.add_argument("--theta", help="overlap; comma-separated list for rates")
    common.add_argument("--omega", help="score; comma-separated list for rates")
    common.add_argument("--n", help="rounds; 'lo:hi:k' sweeps k per decade for finite")
    common.add_argument("--grid", help="points per axis on [0.5, 1] or 'lo:hi:num'")
    common.add_argument("--eps-c", dest="eps_c", type=float)
    common.add_argument("--eps-s", dest="eps_s", type=float)
    common.add_argument("--eps-ext", dest="eps_ext", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--out")
    common.add_argument("--config", help="flat JSON file of settings")
    common.add_argument("--mode", choices=("certified", "heuristic"))
    common.add_argument("--protocol", choices=("recycling", "public-input"))
    common.add_argument("--tol", type=float)
    common.add_argument("--delta-theta", dest="delta_theta", type=float)
    common.add_argument("--delta-omega", dest="delta_omega", type=float)
    common.add_argument("--kind", choices=("qubit", "coherent", "classical_mixing", "custom_table"))
    common.add_argument("--detection-efficiency", dest="detection_efficiency", type=float)
    common.add_argument("--cache-dir", dest="cache_dir")
    common.add_argument("--transcript")
    common.add_argument("--input")
    common.add_argument("--seed-file", dest="seed_file")
    common.add_argument("--report")
    common.add_argument("--strict", action="store_true",
                        help="exit 4 if any solver point stopped on its budget")
    p = argparse.ArgumentParser(prog="sdirand", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__doc__.splitlines()[0])
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = resolve(args.command, args)
        return COMMANDS[args.command](cfg)
    except SolverError as exc:
        _log(f"solver error: {exc}")
        return EXIT_SOLVER
    except (ValueError, KeyError, TypeError, OSError) as exc:
        _log(f"configuration error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
