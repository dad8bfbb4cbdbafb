"""Command line front-end: discretize, price, hedge, verify-hedge, lift, duality-suite, report."""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import discretize as disc
from . import hedging, lifting, mot
from .lp import FAILURE, INFEASIBLE
from .marginals import project_marginal, read_marginal_csv
from .payoffs import make_claim
from .paths import RNG_ALGORITHM, ConfigError, DomainError, GridPath, read_paths_csv, write_grid_csv

EXIT_OK, EXIT_CONFIG, EXIT_SOLVE = 0, 1, 2

TOLERANCES = {
    "duality": mot.DUALITY_TOL,
    "lp_pivot": 1e-10,
    "measure_residual": 1e-9,
    "superreplication": 1e-9,
    "slack_bound": "1/N",
}

DEFAULTS = {
    "N": 2, "m": 2, "J": None, "B": None, "T": 1.0, "mode": "exact", "band_K": 0.0,
    "claim": "vanilla", "K": None, "rate": 0.0, "p": 2.0, "seed": 42, "samples": 100_000,
    "max_nodes": mot.DEFAULT_MAX_NODES, "mean_tol": 1e-9,
}

INT_KEYS = {"N", "m", "J", "seed", "samples", "max_nodes"}
FLOAT_KEYS = {"B", "T", "band_K", "K", "rate", "p", "mean_tol"}


def version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def read_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; keys use flag names (``band-K`` or ``band_K``)."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    out = {}
    for n, line in enumerate(p.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{p}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _coerce(key, val):
    if val is None:
        return None
    try:
        if key in INT_KEYS:
            return int(val)
        if key in FLOAT_KEYS:
            return float(val)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {val!r}") from None
    return val


def resolve(args: argparse.Namespace) -> dict:
    """Flags override config values, which override defaults."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(read_config(args.config))
    for k, v in vars(args).items():
        if v is not None:
            cfg[k] = v
    cfg = {k: _coerce(k, v) for k, v in cfg.items()}
    for k in ("N", "m", "J", "samples"):
        if k in cfg and cfg[k] is not None and cfg[k] < (0 if k == "m" else 1):
            raise ConfigError(f"{k} out of range: {cfg[k]}")
    return cfg


def _plain(o):
    # numpy scalars and arrays leak into diagnostics dicts
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True, default=_plain) + "\n"


def emit(report: dict, cfg: dict, timings: dict) -> None:
    """Write the byte-stable report and a separate timings sidecar."""
    report = dict(report)
    report["version"] = version()
    report["rng"] = {"algorithm": RNG_ALGORITHM, "seed": cfg.get("seed")}
    report["tolerances"] = TOLERANCES
    out = cfg.get("out")
    text = _dump(report)
    if out:
        Path(out).write_text(text)
        Path(str(out) + ".timings.json").write_text(_dump(timings))
    else:
        sys.stdout.write(text)


def _inputs_echo(cfg: dict, keys) -> dict:
    return {k: cfg.get(k) for k in keys}


def _claim(cfg):
    params = {"kind": cfg["claim"], "K": cfg.get("K"), "rate": cfg.get("rate"), "T": cfg.get("T")}
    return make_claim(params)


def _marginal(cfg):
    path = cfg.get("marginal")
    if not path:
        raise ConfigError("--marginal is required")
    if not Path(path).is_file():
        raise ConfigError(f"marginal file not found: {path}")
    return read_marginal_csv(path, p=cfg["p"], mean_tol=cfg["mean_tol"])


# without --J, use the largest menu up to the library default whose tree stays
# small enough for the dense simplex to finish in seconds
AUTO_J_NODES = 3000


def _tree(cfg):
    if cfg.get("J") is not None:
        return mot.build_tree(cfg["N"], cfg["m"], cfg["J"], cfg.get("B"), cfg["T"], cfg["max_nodes"])
    cap = min(cfg["max_nodes"], AUTO_J_NODES)
    for J in range(mot.DEFAULT_J, 0, -1):
        try:
            tree = mot.build_tree(cfg["N"], cfg["m"], J, cfg.get("B"), cfg["T"], cap)
        except mot.TreeSizeError:
            continue
        cfg["J"] = J
        return tree
    cfg["J"] = 1
    return mot.build_tree(cfg["N"], cfg["m"], 1, cfg.get("B"), cfg["T"], cfg["max_nodes"])


def _solve_code(*statuses) -> int:
    return EXIT_SOLVE if any(s in (INFEASIBLE, FAILURE, "unbounded") for s in statuses) else EXIT_OK


def _solution_dict(res: mot.MOTResult) -> dict:
    s = res.solution
    return {"status": s.status, "value": s.value if s.ok else None, "iterations": s.iterations,
            "lp_residuals": s.residuals, "message": s.message, "residuals": res.residuals}


# ----------------------------------------------------------------------------- measure / portfolio files

def measure_to_json(Q: mot.TreeMeasure) -> dict:
    t = Q.tree
    leaves = []
    for i, q in enumerate(Q.masses):
        if q > 0:
            f = t.grid_path(i)
            leaves.append({"initial": f.initial, "gaps": list(f.gaps), "signs": list(f.signs), "mass": float(q)})
    return {"N": t.N, "m": t.m, "J": t.J, "B": t.B, "T": t.T, "leaves": leaves}


def measure_from_json(data: dict, max_nodes: int = mot.DEFAULT_MAX_NODES) -> mot.TreeMeasure:
    try:
        tree = mot.build_tree(int(data["N"]), int(data["m"]), int(data["J"]), data.get("B"),
                              float(data.get("T", 1.0)), max_nodes)
        q = np.zeros(tree.size)
        for leaf in data["leaves"]:
            f = GridPath(tree.N, tree.T, float(leaf["initial"]), tuple(leaf["gaps"]), tuple(leaf["signs"]))
            i = tree.locate(f)
            if i is None:
                raise ConfigError(f"measure leaf not in tree: {leaf}")
            q[i] += float(leaf["mass"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed measure file: {exc}") from None
    return mot.TreeMeasure(tree, q)


def portfolio_to_json(tree: mot.PathTree, res: mot.MOTResult) -> dict:
    gam = [[node, None if code is None else code[0], None if code is None else code[1], v]
           for (node, code), v in sorted(res.gamma.items(), key=lambda kv: (kv[0][0], kv[0][1] or ("", 0)))]
    return {"N": tree.N, "m": tree.m, "J": tree.J, "B": tree.B, "T": tree.T, "mode": res.mode,
            "cash": res.cash, "h": {str(k): v for k, v in sorted(res.h.items())}, "gamma": gam}


def portfolio_from_json(data: dict):
    try:
        tree = mot.build_tree(int(data["N"]), int(data["m"]), int(data["J"]), data.get("B"), float(data["T"]))
        h = {int(k): float(v) for k, v in data["h"].items()}
        gamma = {}
        for node, fam, i, v in data["gamma"]:
            gamma[(int(node), None if fam is None else (fam, int(i)))] = float(v)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed portfolio file: {exc}") from None
    return tree, hedging.lift_tree_hedge(h, gamma, tree, float(data.get("cash", 0.0)))


# ----------------------------------------------------------------------------- subcommands

def cmd_discretize(cfg) -> int:
    src = cfg.get("input")
    if not src or not Path(src).is_file():
        raise ConfigError(f"path file not found: {src}")
    paths = read_paths_csv(src)
    N = cfg["N"]
    grids, diags = [], []
    for S in paths:
        grids.append(disc.embed_F(S, N))
        diags.append(disc.discretize_diagnostics(S, N))
    if cfg.get("out"):
        write_grid_csv(grids, cfg["out"])
    report = {"command": "discretize", "inputs": _inputs_echo(cfg, ["input", "N"]),
              "paths": len(paths), "diagnostics": diags,
              "slack_violations": sum(d["gap_slack"] > d["slack_bound"] for d in diags)}
    # the grid CSV takes --out here, so the report goes to --diagnostics or stdout
    emit(report, {**cfg, "out": cfg.get("diagnostics")}, {})
    return EXIT_OK


def cmd_price(cfg) -> int:
    t0 = time.perf_counter()
    G, mu = _claim(cfg), _marginal(cfg)
    tree = _tree(cfg)
    nu = project_marginal(mu, cfg["N"])
    res = mot.primal_lp(tree, G, nu, cfg["mode"], cfg["band_K"])
    report = {"command": "price",
              "inputs": _inputs_echo(cfg, ["claim", "K", "rate", "T", "marginal", "N", "m", "J", "B", "mode", "band_K"]),
              "tree": tree.diagnostics(), **_solution_dict(res), "certificate_path": None}
    if res.solution.ok and cfg.get("measure_out"):
        Path(cfg["measure_out"]).write_text(_dump(measure_to_json(res.measure)))
        report["certificate_path"] = cfg["measure_out"]
    emit(report, cfg, {"solve_seconds": time.perf_counter() - t0})
    return _solve_code(res.status)


def cmd_hedge(cfg) -> int:
    t0 = time.perf_counter()
    G, mu = _claim(cfg), _marginal(cfg)
    tree = _tree(cfg)
    nu = project_marginal(mu, cfg["N"])
    res = mot.dual_lp(tree, G, nu, cfg["mode"], cfg["band_K"])
    report = {"command": "hedge",
              "inputs": _inputs_echo(cfg, ["claim", "K", "rate", "T", "marginal", "N", "m", "J", "B", "mode", "band_K"]),
              "tree": tree.diagnostics(), **_solution_dict(res), "certificate_path": None}
    if res.solution.ok:
        report["h"] = {str(k): v for k, v in sorted(res.h.items())}
        if cfg.get("certificate"):
            Path(cfg["certificate"]).write_text(_dump(portfolio_to_json(tree, res)))
            report["certificate_path"] = cfg["certificate"]
    emit(report, cfg, {"solve_seconds": time.perf_counter() - t0})
    return _solve_code(res.status)


def cmd_verify_hedge(cfg) -> int:
    for key in ("portfolio", "paths"):
        if not cfg.get(key) or not Path(cfg[key]).is_file():
            raise ConfigError(f"{key} file not found: {cfg.get(key)}")
    tree, pi = portfolio_from_json(json.loads(Path(cfg["portfolio"]).read_text()))
    G = _claim(cfg)
    paths = read_paths_csv(cfg["paths"])
    margins, viol = [], []
    for i, S in enumerate(paths):
        try:
            z = hedging.portfolio_value(pi, S)
        except hedging.OutOfTreeError as exc:
            margins.append(None)
            viol.append({"path": i, "kind": "out-of-tree", "message": str(exc)})
            continue
        m = z - float(G(S))
        margins.append(m)
        if m < -TOLERANCES["superreplication"]:
            viol.append({"path": i, "kind": "superreplication", "margin": m})
    finite = [m for m in margins if m is not None]
    report = {"command": "verify-hedge", "inputs": _inputs_echo(cfg, ["portfolio", "paths", "claim", "K", "rate"]),
              "margins": margins, "min_margin": min(finite) if finite else None, "violations": viol}
    emit(report, cfg, {})
    return EXIT_OK


def cmd_lift(cfg) -> int:
    src = cfg.get("measure")
    if not src or not Path(src).is_file():
        raise ConfigError(f"measure file not found: {src}")
    t0 = time.perf_counter()
    Q = measure_from_json(json.loads(Path(src).read_text()), cfg["max_nodes"])
    check = mot.verify_measure(Q.tree, Q)
    if check["martingale"] > TOLERANCES["measure_residual"] or check["normalization"] > TOLERANCES["measure_residual"]:
        raise ConfigError(f"measure is not a normalized martingale measure: {check}")
    th = lifting.compute_thresholds(lifting.extract_conditionals(Q))
    samples = lifting.simulate_lift(th, cfg["samples"], cfg["seed"])
    rep = lifting.verify_identity(samples, Q)
    report = {"command": "lift", "inputs": _inputs_echo(cfg, ["measure", "samples", "seed"]),
              "alphabet": th.tables.alphabet.tolist(), **rep}
    emit(report, cfg, {"simulate_seconds": time.perf_counter() - t0})
    return EXIT_OK


def _parse_schedule(text: str) -> list[tuple]:
    try:
        return [tuple(int(x) for x in item.split(":")) for item in text.split(",") if item.strip()]
    except ValueError:
        raise ConfigError(f"schedule must look like 'N:m:J,N:m:J', got {text!r}") from None


def cmd_duality_suite(cfg) -> int:
    t0 = time.perf_counter()
    G, mu = _claim(cfg), _marginal(cfg)
    tree = _tree(cfg)
    nu = project_marginal(mu, cfg["N"])
    pair = mot.solve_pair(tree, G, nu, cfg["mode"], cfg["band_K"])
    p, d = pair["primal"], pair["dual"]
    report = {"command": "duality-suite",
              "inputs": _inputs_echo(cfg, ["claim", "K", "rate", "T", "marginal", "N", "m", "J", "B", "mode", "band_K"]),
              "primal": _solution_dict(p), "dual": _solution_dict(d),
              "gap": None if math.isnan(pair["gap"]) else pair["gap"],
              "strong_duality": (not math.isnan(pair["gap"]))
              and abs(pair["gap"]) <= mot.DUALITY_TOL * (1 + abs(p.value)),
              "tree": tree.diagnostics()}
    if cfg.get("schedule"):
        ref = mot.refine_experiment(G, mu, _parse_schedule(cfg["schedule"]), cfg["mode"], cfg["band_K"], cfg.get("B"))
        report["refine"] = ref
        if cfg.get("table"):
            with open(cfg["table"], "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["N", "m", "J", "primal", "dual", "gap", "status", "nodes"])
                for r in ref["rows"]:
                    w.writerow([r["N"], r["m"], r["J"], r["primal"], r["dual"], r["gap"], r["status"],
                                r["truncation"]["nodes"]])
    emit(report, cfg, {"solve_seconds": time.perf_counter() - t0})
    return _solve_code(p.status, d.status)


def cmd_report(cfg) -> int:
    files = cfg.get("inputs") or []
    rows = []
    for f in files:
        if not Path(f).is_file():
            raise ConfigError(f"report input not found: {f}")
        data = json.loads(Path(f).read_text())
        rows.append({"file": f, "command": data.get("command"), "status": data.get("status"),
                     "value": data.get("value"), "gap": data.get("gap"),
                     "primal": (data.get("primal") or {}).get("value"),
                     "dual": (data.get("dual") or {}).get("value")})
    emit({"command": "report", "reports": rows}, cfg, {})
    return EXIT_OK


COMMANDS = {
    "discretize": cmd_discretize, "price": cmd_price, "hedge": cmd_hedge,
    "verify-hedge": cmd_verify_hedge, "lift": cmd_lift, "duality-suite": cmd_duality_suite,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="robusthedge", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value file; flags override it")
        p.add_argument("--out", help="JSON report path (stdout if omitted)")
        p.add_argument("--seed", type=int)

    def lp_args(p):
        p.add_argument("--claim", help="vanilla | lookback | asian | lookback-put | alpha | terminal")
        p.add_argument("--K", type=float, help="claim strike / level")
        p.add_argument("--rate", type=float)
        p.add_argument("--T", type=float)
        p.add_argument("--marginal", help="CSV with header x,weight or x,density")
        p.add_argument("--p", type=float, help="moment order of the marginal")
        p.add_argument("--N", type=int)
        p.add_argument("--m", type=int, help="max number of jumps")
        p.add_argument("--J", type=int, help="gap menu size per family")
        p.add_argument("--B", type=float, help="price cap")
        p.add_argument("--mode", choices=["exact", "band"])
        p.add_argument("--band-K", dest="band_K", type=float, help="band width: l1 deviation <= band-K / N")
        p.add_argument("--max-nodes", dest="max_nodes", type=int)

    p = sub.add_parser("discretize", help="crossing-time embedding of sampled paths")
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--input", help="CSV with header t,value or path,t,value")
    p.add_argument("--N", type=int)
    p.add_argument("--out", help="grid-path CSV output")
    p.add_argument("--diagnostics", help="JSON report path (stdout if omitted)")

    for name, hlp in (("price", "primal LP value"), ("hedge", "dual LP super-hedge")):
        p = sub.add_parser(name, help=hlp)
        common(p)
        lp_args(p)
        if name == "price":
            p.add_argument("--measure-out", dest="measure_out")
        else:
            p.add_argument("--certificate", help="portfolio JSON output")

    p = sub.add_parser("verify-hedge", help="replay a portfolio on continuous paths")
    common(p)
    p.add_argument("--portfolio")
    p.add_argument("--paths")
    p.add_argument("--claim")
    p.add_argument("--K", type=float)
    p.add_argument("--rate", type=float)

    p = sub.add_parser("lift", help="Brownian lifting of a tree measure")
    common(p)
    p.add_argument("--measure")
    p.add_argument("--samples", type=int)
    p.add_argument("--max-nodes", dest="max_nodes", type=int)

    p = sub.add_parser("duality-suite", help="primal, dual and refinement table")
    common(p)
    lp_args(p)
    p.add_argument("--schedule", help="comma list of N:m:J")
    p.add_argument("--table", help="CSV output for the refinement table")

    p = sub.add_parser("report", help="summarize JSON reports")
    common(p)
    p.add_argument("inputs", nargs="*")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, DomainError, mot.TreeSizeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
