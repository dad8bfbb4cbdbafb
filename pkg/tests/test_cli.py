import json

import pytest

from robusthedge import cli
from robusthedge.paths import PathGeneratorConfig, generate_paths, write_paths_csv


@pytest.fixture
def twopoint(tmp_path):
    p = tmp_path / "twopoint.csv"
    p.write_text("x,weight\n0.5,0.5\n1.5,0.5\n")
    return p


def run(*argv):
    return cli.main([str(a) for a in argv])


def load(p):
    return json.loads(p.read_text())


def test_price_vanilla(twopoint, tmp_path):
    out = tmp_path / "r.json"
    assert run("price", "--claim", "vanilla", "--K", 1, "--marginal", twopoint, "--N", 2, "--m", 2,
               "--out", out) == 0
    rep = load(out)
    assert rep["value"] == pytest.approx(0.25, abs=1e-10)
    assert rep["rng"]["algorithm"] == "PCG64"
    assert rep["tolerances"]["duality"] == 1e-8
    assert "version" in rep and "inputs" in rep
    assert "solve_seconds" in load(tmp_path / "r.json.timings.json")


def test_duality_suite_lookback(twopoint, tmp_path):
    out = tmp_path / "d.json"
    assert run("duality-suite", "--claim", "lookback", "--marginal", twopoint, "--N", 2, "--m", 4,
               "--out", out) == 0
    rep = load(out)
    assert rep["primal"]["value"] == pytest.approx(1.25, abs=1e-8)
    assert rep["dual"]["value"] == pytest.approx(1.25, abs=1e-8)
    assert rep["strong_duality"] is True


def test_missing_marginal(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert run("price", "--marginal", missing) == 1
    assert str(missing) in capsys.readouterr().err


def test_infeasible_exit_code(tmp_path):
    wide = tmp_path / "wide.csv"
    wide.write_text("x,weight\n0.0,0.5\n2.0,0.5\n")
    assert run("price", "--marginal", wide, "--N", 2, "--m", 0, "--out", tmp_path / "r.json") == 2


def test_tree_size_guard_is_config_error(twopoint, tmp_path):
    assert run("price", "--marginal", twopoint, "--N", 2, "--m", 4, "--J", 3, "--out", tmp_path / "r.json") == 1


def test_bad_claim_kind(twopoint, tmp_path):
    assert run("price", "--claim", "barrier", "--marginal", twopoint, "--out", tmp_path / "r.json") == 1


def test_reports_are_byte_stable(twopoint, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["duality-suite", "--claim", "asian", "--marginal", twopoint, "--N", 2, "--m", 2, "--J", 2]
    run(*args, "--out", a)
    run(*args, "--out", b)
    assert a.read_bytes() == b.read_bytes()


def test_config_file_and_override(twopoint, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# pricing run\nclaim = vanilla\nK = 1.0\nmarginal = {twopoint}\nN = 2\nm = 1\n")
    out = tmp_path / "r.json"
    assert run("price", "--config", cfg, "--m", 2, "--out", out) == 0
    rep = load(out)
    assert rep["inputs"]["m"] == 2 and rep["value"] == pytest.approx(0.25)


def test_bad_config_line(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("claim vanilla\n")
    assert run("price", "--config", cfg) == 1


def test_band_mode(twopoint, tmp_path):
    out = tmp_path / "r.json"
    assert run("duality-suite", "--claim", "lookback", "--marginal", twopoint, "--N", 2, "--m", 2, "--J", 2,
               "--mode", "band", "--band-K", 0.5, "--out", out) == 0
    rep = load(out)
    assert rep["primal"]["value"] >= 1.25 - 1e-9
    assert rep["strong_duality"]


def test_refine_table(twopoint, tmp_path):
    table = tmp_path / "t.csv"
    assert run("duality-suite", "--claim", "vanilla", "--marginal", twopoint, "--N", 2, "--m", 1,
               "--schedule", "2:1:1,2:2:2", "--table", table, "--out", tmp_path / "r.json") == 0
    lines = table.read_text().splitlines()
    assert lines[0].startswith("N,m,J,primal,dual")
    assert len(lines) == 3


def test_hedge_then_verify(twopoint, tmp_path):
    cert = tmp_path / "cert.json"
    assert run("hedge", "--claim", "lookback", "--marginal", twopoint, "--N", 2, "--m", 2, "--J", 3,
               "--mode", "band", "--band-K", 1.0, "--certificate", cert, "--out", tmp_path / "h.json") == 0
    paths = tmp_path / "paths.csv"
    write_paths_csv(generate_paths(PathGeneratorConfig(volatility=0.3, seed=5), 30), paths)
    out = tmp_path / "v.json"
    assert run("verify-hedge", "--portfolio", cert, "--paths", paths, "--claim", "lookback", "--out", out) == 0
    rep = load(out)
    assert len(rep["margins"]) == 30
    assert all(v["kind"] in ("superreplication", "out-of-tree") for v in rep["violations"])


def test_price_measure_then_lift(twopoint, tmp_path):
    q = tmp_path / "q.json"
    assert run("price", "--claim", "lookback", "--marginal", twopoint, "--N", 2, "--m", 2, "--J", 1,
               "--measure-out", q, "--out", tmp_path / "p.json") == 0
    out = tmp_path / "lift.json"
    assert run("lift", "--measure", q, "--samples", 20000, "--seed", 42, "--out", out) == 0
    rep = load(out)
    assert rep["chi_square"]["p_value"] > 1e-3
    assert rep["z_telescoping_max_error"] == 0.0
    assert rep["rng"] == {"algorithm": "PCG64", "seed": 42}


def test_discretize(tmp_path):
    paths = tmp_path / "paths.csv"
    write_paths_csv(generate_paths(PathGeneratorConfig(seed=1), 4), paths)
    grid, diag = tmp_path / "grid.csv", tmp_path / "diag.json"
    assert run("discretize", "--input", paths, "--N", 8, "--out", grid, "--diagnostics", diag) == 0
    rep = load(diag)
    assert rep["paths"] == 4 and rep["slack_violations"] == 0
    assert grid.read_text().startswith("N,T,initial")


def test_report_summary(twopoint, tmp_path):
    a = tmp_path / "a.json"
    run("price", "--claim", "vanilla", "--marginal", twopoint, "--N", 2, "--m", 1, "--out", a)
    out = tmp_path / "s.json"
    assert run("report", a, "--out", out) == 0
    assert load(out)["reports"][0]["value"] == pytest.approx(0.25)
