import csv
import json
import math

import numpy as np
import pytest

from sdirand.cli import (
    EXIT_ABORT,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_SOLVER,
    FINITE_HEADER,
    GFUNC_HEADER,
    RATES_HEADER,
    TABLE_HEADER,
    main,
)
from sdirand.extractor import read_bits
from sdirand.qubit import classical_boundary, quantum_max_score


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def small(tmp_path):
    """Flags for a 6 x 6 grid cached under ``tmp_path``."""
    return ["--grid", "6", "--cache-dir", str(tmp_path / "cache")]


def test_gfunc_schema(tmp_path, small):
    out = tmp_path / "g.csv"
    assert main(["gfunc", *small, "--out", str(out)]) == EXIT_OK
    rows = _rows(out)
    assert rows[0] == GFUNC_HEADER and len(rows) == 37
    for om, th, v, feas in rows[1:]:
        om, th, v = float(om), float(th), float(v)
        assert feas in ("0", "1")
        assert (feas == "1") == math.isfinite(v)
        if om > quantum_max_score(th) + 1e-9:
            assert feas == "0"
        if om <= classical_boundary(th):
            assert v == 0.0
    meta = json.loads((tmp_path / "g.csv.meta.json").read_text())
    assert meta["p0"] == 0.5 and "flagged" in meta
    # second run is served from the cache and byte-identical
    out2 = tmp_path / "g2.csv"
    assert main(["gfunc", *small, "--out", str(out2)]) == EXIT_OK
    assert out.read_bytes() == out2.read_bytes()


def test_gfunc_smoke_two_by_two(tmp_path):
    out = tmp_path / "g.csv"
    assert main(["gfunc", "--grid", "2", "--cache-dir", str(tmp_path), "--out", str(out)]) == 0
    assert _rows(out)[0] == GFUNC_HEADER and len(_rows(out)) == 5


def test_gfunc_strict_budget(tmp_path, small):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"max_boxes": 5}))
    out = tmp_path / "g.csv"
    assert main(["gfunc", *small, "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    assert json.loads((tmp_path / "g.csv.meta.json").read_text())["flagged"]
    assert main(["gfunc", *small, "--config", str(cfg), "--strict", "--out", str(out)]) == EXIT_SOLVER


def test_bias_shifts_nonzero_region():
    def onset(path_rows):
        pos = [float(th) for om, th, v, f in path_rows[1:] if f == "1" and float(v) > 1e-6]
        return min(pos)

    rows = {}
    for p0 in ("0.5", "0.99"):
        import io
        import contextlib
        buf = io.StringIO()
        with contextlib.redirect_stdout(buf):
            assert main(["gfunc", "--p0", p0]) == EXIT_OK
        rows[p0] = list(csv.reader(io.StringIO(buf.getvalue())))
    assert onset(rows["0.99"]) > onset(rows["0.5"])


def test_rates_schema(tmp_path, small):
    out = tmp_path / "r.csv"
    assert main(["rates", *small, "--out", str(out)]) == EXIT_OK
    rows = _rows(out)
    assert rows[0] == RATES_HEADER
    kinds = {r[2] for r in rows[1:]}
    assert kinds == {"r1", "r1_noT", "r2_cert", "r2_expansion"}
    for om, th, kind, rate in rows[1:]:
        assert float(om) <= quantum_max_score(float(th)) + 1e-12
        if kind == "r1":
            assert float(rate) >= 0


def test_rates_default_grid_monotone_in_omega(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["rates", "--theta", "0.8,0.9", "--out", str(out)]) == EXIT_OK
    rows = [r for r in _rows(out)[1:] if r[2] == "r1"]
    for th in ("0.8", "0.9"):
        rates = [float(r[3]) for r in rows if float(r[1]) == float(th)]
        assert len(rates) > 5 and np.all(np.diff(rates) >= -1e-12)


def test_finite_schema_and_crossover(tmp_path):
    out = tmp_path / "f.csv"
    assert main(["finite", "--gamma", "0.1", "--n", "4:6:1", "--out", str(out)]) == EXIT_OK
    rows = _rows(out)
    assert rows[0] == FINITE_HEADER
    body, summary = rows[1:-1], rows[-1]
    assert [int(r[0]) for r in body] == [10 ** 4, 10 ** 5, 10 ** 6]
    assert summary[0] == "crossover" and float(summary[1]) == 0.1
    assert 1e5 < float(summary[2]) <= 1e6
    table = _rows(tmp_path / "f_gamma0.1_table.csv")
    assert table[0] == TABLE_HEADER and len(table) == 4


def test_simulate_and_abort(tmp_path):
    t = tmp_path / "t.csv"
    base = ["simulate", "--n", "5000", "--seed", "1", "--out", str(t)]
    assert main(base) == EXIT_OK
    s = json.loads((tmp_path / "t.csv.summary.json").read_text())
    assert s["seed"] == 1 and not s["aborted"] and s["abort_reason"] is None
    assert _rows(t)[0] == ["i", "t", "x", "y"] and len(_rows(t)) == 5001
    a = tmp_path / "a.csv"
    rc = main(["simulate", "--n", "5000", "--seed", "1", "--detection-efficiency", "0.3",
               "--omega", "0.8", "--out", str(a)])
    assert rc == EXIT_ABORT
    s = json.loads((tmp_path / "a.csv.summary.json").read_text())
    assert s["aborted"] and "omega_hash" in s["abort_reason"]
    e = tmp_path / "e.bin"
    assert main(["extract", "--transcript", str(a), "--n", "10", "--out", str(e)]) == EXIT_ABORT
    assert not e.exists()


def test_simulate_determinism_and_os_seed(tmp_path):
    a, b, c = (tmp_path / f"{k}.csv" for k in "abc")
    for p in (a, b):
        assert main(["simulate", "--n", "2000", "--seed", "9", "--out", str(p)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    main(["simulate", "--n", "2000", "--out", str(c)])
    s = json.loads((tmp_path / "c.csv.summary.json").read_text())
    assert s["seed_from_os_entropy"] is True and isinstance(s["seed"], int)
    # the echoed seed reproduces the run
    d = tmp_path / "d.csv"
    main(["simulate", "--n", "2000", "--seed", str(s["seed"]), "--out", str(d)])
    assert c.read_bytes() == d.read_bytes()


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 3000, "seed": 5, "theta": 0.8}))
    t = tmp_path / "t.csv"
    assert main(["simulate", "--config", str(cfg), "--out", str(t)]) in (EXIT_OK, EXIT_ABORT)
    s = json.loads((tmp_path / "t.csv.summary.json").read_text())
    assert s["n"] == 3000 and s["seed"] == 5 and s["params"]["theta_exp"] == 0.8
    main(["simulate", "--config", str(cfg), "--n", "1000", "--out", str(t)])
    s = json.loads((tmp_path / "t.csv.summary.json").read_text())
    assert s["n"] == 1000 and s["seed"] == 5
    assert s["params"]["gamma"] == 0.1  # command default


def test_custom_table_device(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "custom_table", "table": [1.0, 1.0], "theta": 1.0}))
    t = tmp_path / "t.csv"
    assert main(["simulate", "--config", str(cfg), "--n", "1000", "--seed", "0",
                 "--delta-theta", "0.1", "--delta-omega", "0.1", "--out", str(t)]) == EXIT_OK
    bad = tmp_path / "b.json"
    bad.write_text(json.dumps({"kind": "custom_table"}))
    assert main(["simulate", "--config", str(bad), "--out", str(t)]) == EXIT_CONFIG


@pytest.mark.parametrize("argv", [
    ["rates", "--p0", "2"],
    ["simulate", "--n", "0"],
    ["simulate", "--gamma", "0.1,0.2"],
    ["gfunc", "--grid", "1"],
    ["bogus"],
    ["simulate", "--kind", "laser"],
    ["extract"],
    ["extract", "--input", "missing.bin", "--n", "4"],
])
def test_config_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == EXIT_CONFIG


def test_config_file_errors(tmp_path):
    bad = tmp_path / "c.json"
    bad.write_text(json.dumps({"unknown_key": 1}))
    assert main(["simulate", "--config", str(bad)]) == EXIT_CONFIG
    bad.write_text("[1, 2]")
    assert main(["simulate", "--config", str(bad)]) == EXIT_CONFIG
    bad.write_text("{not json")
    assert main(["simulate", "--config", str(bad)]) == EXIT_CONFIG


def test_extract_from_bits(tmp_path):
    from sdirand.extractor import write_bits
    src = write_bits(tmp_path / "in.bin", np.random.default_rng(0).integers(0, 2, 500))
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    for p in (a, b):
        assert main(["extract", "--input", str(src), "--n", "100", "--seed", "3",
                     "--out", str(p)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes() and read_bits(a).size == 100
    assert main(["extract", "--input", str(src), "--n", "600", "--out", str(a)]) == EXIT_CONFIG
    assert main(["extract", "--input", str(src), "--n", "0", "--out", str(a)]) == EXIT_OK
    assert read_bits(a).size == 0


def test_pipeline(tmp_path):
    """simulate -> tradeoff -> finite -> extract for an honest run."""
    t, rep, fin, e = (tmp_path / k for k in ("t.csv", "r.json", "f.csv", "e.bin"))
    n = "1000000"
    assert main(["tradeoff", "--n", n, "--out", str(tmp_path / "plan.json")]) == EXIT_OK
    plan = json.loads((tmp_path / "plan.json").read_text())
    dw, dt = plan["params"]["delta_omega"], plan["params"]["delta_theta"]
    assert main(["simulate", "--n", n, "--seed", "2024", "--delta-omega", repr(dw),
                 "--delta-theta", repr(dt), "--omega", repr(plan["params"]["omega_exp"]),
                 "--out", str(t)]) == EXIT_OK
    assert main(["tradeoff", "--transcript", str(t), "--out", str(rep)]) == EXIT_OK
    report = json.loads(rep.read_text())
    assert report["max_violation"] <= 1e-12
    assert report["net_rate"] > 0 and report["output_len"] > 0
    assert report["input_len"] == 3 * int(n)
    assert main(["finite", "--gamma", "0.1", "--n", "6:6:1", "--out", str(fin)]) == EXIT_OK
    assert float(_rows(fin)[1][2]) > 0
    assert main(["extract", "--transcript", str(t), "--report", str(rep), "--seed", "7",
                 "--out", str(e)]) == EXIT_OK
    bits = read_bits(e)
    assert bits.size == report["output_len"]
    assert abs(bits.mean() - 0.5) < 0.01
