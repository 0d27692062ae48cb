"""Command-line entry point: ``geopressure <subcommand> [flags]``.

Exit codes: 0 success, 2 when an estimator only produced sentinels (all
branches pruned, no admissible pieces), 1 on errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
import warnings
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import __version__
from .config import build_config, load_config_file
from .dimension import (
    MCM_ESTIMATORS,
    TREE_ESTIMATORS,
    EstimatorSpec,
    _PUZZLES,
    convergence_report,
    first_zero,
    pressure_curve,
    puzzle_levels,
)
from .errors import ConfigError, GeoPressureError, NoSignChangeError

CSV_COLUMNS = ["estimator", "param_name", "param_value", "t", "value", "branch_count_or_dim", "flags"]
SUBCOMMANDS = ("tree-pressure", "mcmullen", "pullback", "dimension", "diagnose", "cache")
EXIT_OK, EXIT_ERROR, EXIT_SENTINEL = 0, 1, 2


def _fmt(x: float) -> str:
    if x == -math.inf:
        return "-inf"
    return repr(float(x))


# ---------------------------------------------------------------------------
# argument handling

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--map", help="map kind, or an inline YAML/JSON map mapping")
    common.add_argument("--c", help="parameter c of z^d + c (e.g. -0.5 or -0.1+0.6j)")
    common.add_argument("--degree", type=int)
    common.add_argument("--estimator")
    common.add_argument("--depth", "-n", dest="n", help="tree depth: k, 'lo..hi' or 'a,b,c'")
    common.add_argument("--puzzle-depth", "-N", dest="N", help="puzzle depth, same forms as -n")
    common.add_argument("--delta", type=float)
    common.add_argument("--Delta", type=float)
    common.add_argument("--samples", "-m", dest="m", type=int)
    common.add_argument("--radius", "-r", dest="r", type=float)
    common.add_argument("--kappa", type=float)
    common.add_argument("--eta", type=float)
    common.add_argument("--theta", help="external angle of the base point ray")
    common.add_argument("--z", help="explicit tree base point (overrides the ray heuristic)")
    common.add_argument("--angles", help="comma-separated cut angles, e.g. 0,1/2")
    common.add_argument("--t-min", type=float)
    common.add_argument("--t-max", type=float)
    common.add_argument("--t-step", type=float)
    common.add_argument("--threads", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--plot", action="store_true", default=None)
    common.add_argument("--cache-dir")

    p = argparse.ArgumentParser(prog="geopressure", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"geopressure {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("tree-pressure", parents=[common], help="backward-tree pressure curves")
    sub.add_parser("mcmullen", parents=[common], help="puzzle / McMullen matrix pressure curves")
    sub.add_parser("pullback", parents=[common], help="pullback-infimum tree pressure curves")
    sub.add_parser("dimension", parents=[common], help="curves plus refined first zeros")
    sub.add_parser("diagnose", parents=[common], help="telescope and metric-consistency checks")
    c = sub.add_parser("cache", help="inspect or clear a level cache")
    c.add_argument("action", choices=("inspect", "clear"))
    c.add_argument("--cache-dir", required=True)
    return p


def _depth_arg(v: str):
    if ".." in v:
        return v
    if "," in v:
        return [int(x) for x in v.split(",")]
    return int(v)


def merge_args(args: argparse.Namespace, command: str) -> dict:
    """Config file values overlaid with command-line flags."""
    data = load_config_file(args.config) if args.config else {}
    data = dict(data)
    m = dict(data.get("map") or {})
    if args.map:
        parsed = yaml.safe_load(args.map)
        if isinstance(parsed, dict):
            m = parsed
        else:
            m["kind"] = str(parsed)
    if args.c is not None:
        m["c"] = args.c
        m.setdefault("kind", "unicritical")
    if args.degree is not None:
        m["degree"] = args.degree
    if m:
        data["map"] = m
    if args.estimator:
        data["estimator"] = args.estimator
    if not data.get("estimator"):
        puzzle = args.N is not None or data.get("N") is not None
        default = {"tree-pressure": "tree-plain", "mcmullen": "mcm-fuzzy", "pullback": "pullback",
                   "dimension": "mcm-fuzzy" if puzzle else "tree-fuzzy"}.get(command)
        if default:
            data["estimator"] = default
    if command == "pullback" and data["estimator"] != "pullback":
        raise ConfigError("the pullback subcommand runs the 'pullback' estimator only")
    if command == "tree-pressure" and data["estimator"] not in TREE_ESTIMATORS:
        raise ConfigError(f"tree-pressure needs a tree estimator: {', '.join(TREE_ESTIMATORS)}")
    if command == "mcmullen" and data["estimator"] not in MCM_ESTIMATORS:
        raise ConfigError(f"mcmullen needs a McMullen estimator: {', '.join(MCM_ESTIMATORS)}")
    for key in ("n", "N"):
        v = getattr(args, key)
        if v is not None:
            data[key] = _depth_arg(v)
    for key in ("delta", "Delta", "m", "r", "kappa", "eta", "theta", "z", "seed"):
        v = getattr(args, key)
        if v is not None:
            data[key] = v
    if args.angles:
        data["angles"] = [a.strip() for a in args.angles.split(",")]
    if any(v is not None for v in (args.t_min, args.t_max, args.t_step)):
        t = dict(data.get("t") or {}) if isinstance(data.get("t", {}), dict) else {}
        for k, v in (("min", args.t_min), ("max", args.t_max), ("step", args.t_step)):
            if v is not None:
                t[k] = v
        data["t"] = t
    if args.threads is not None:
        data["threads"] = args.threads
    out = dict(data.get("output") or {})
    for k, v in (("out", args.out), ("format", args.format), ("plot", args.plot),
                 ("cache_dir", args.cache_dir)):
        if v is not None:
            out[k] = v
    if out:
        data["output"] = out
    return data


# ---------------------------------------------------------------------------
# running

class Collector:
    """Ordered, de-duplicated warnings and flags for the run summary."""

    def __init__(self):
        self.items: list = []

    def add(self, msg: str):
        if msg and msg not in self.items:
            self.items.append(msg)


def _load_puzzle_cache(cfg, collector: Collector):
    if not cfg.cache_dir or cfg.is_tree:
        return
    from .cache import load_levels, puzzle_path, save_levels

    depth = max(cfg.N)
    path = puzzle_path(cfg.cache_dir, cfg.map, cfg.eta, cfg.angles, depth, cfg.cache_format)
    levels = load_levels(path, cfg.map)
    key = (cfg.map, float(cfg.eta), None if cfg.angles is None else tuple(str(a) for a in cfg.angles))
    if levels is not None:
        _PUZZLES[key] = levels
        collector.add(f"puzzle levels 0..{depth} loaded from cache {path.name}")
    else:
        levels = puzzle_levels(cfg.map, depth, cfg.eta, cfg.angles)
        save_levels(levels, path, cfg.cache_format)
        collector.add(f"puzzle levels 0..{depth} written to cache {path.name}")


def compute(cfg, refine: bool, collector: Collector) -> tuple:
    """Curves and zeros for every depth in the config."""
    _load_puzzle_cache(cfg, collector)
    curves, zeros = [], []
    sentinel = False
    for depth in cfg.depths:
        spec = EstimatorSpec(cfg.estimator, cfg.map, cfg.estimator_params(depth))
        curve = pressure_curve(spec, cfg.t_grid)
        for fl in curve.flags:
            collector.add(fl)
        curves.append((depth, curve))
        if curve.all_sentinel:
            sentinel = True
            zeros.append({"param": depth, "error": {"code": "sentinel",
                                                    "message": "; ".join(curve.flags)}})
            continue
        try:
            est = first_zero(curve, refine=refine, tol=cfg.tol_zero)
            for fl in est.flags:
                collector.add(fl)
            zeros.append({"param": depth, "t0": est.t0, "bracket_width": est.bracket_width,
                          "monotone": est.monotone, "lower_bound_claim": est.is_lower_bound_claim,
                          "flags": est.flags})
        except NoSignChangeError as e:
            collector.add(f"{cfg.estimator} at depth {depth}: {e}")
            zeros.append({"param": depth, "error": {"code": e.code, "message": str(e)}})
    return curves, zeros, sentinel


def write_results(cfg, curves, path: Path):
    pname = "n" if cfg.is_tree else "N"
    if cfg.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for depth, c in curves:
            flags = "|".join(c.flags)
            for t, v, k in zip(c.t, c.values, c.counts):
                w.writerow([c.estimator, pname, depth, _fmt(t), _fmt(v), int(k), flags])
        path.write_text(buf.getvalue())
    else:
        rows = [{"estimator": c.estimator, "param_name": pname, "param_value": depth,
                 "t": float(t), "value": _fmt(v) if v == -math.inf else float(v),
                 "branch_count_or_dim": int(k), "flags": c.flags}
                for depth, c in curves for t, v, k in zip(c.t, c.values, c.counts)]
        path.write_text(json.dumps(rows, indent=1) + "\n")


def write_plots(cfg, curves, zeros, outdir: Path, collector: Collector):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        collector.add("plot requested but matplotlib is not installed (pip install geopressure[plot])")
        return
    pname = "n" if cfg.is_tree else "N"
    fig, ax = plt.subplots(figsize=(6, 4))
    for depth, c in curves:
        ok = np.isfinite(c.values)
        ax.plot(c.t[ok], c.values[ok], label=f"{pname}={depth}")
    ax.axhline(0, color="k", lw=0.6)
    ax.set_xlabel("t")
    ax.set_ylabel("pressure")
    ax.set_title(cfg.estimator)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(outdir / "pressure.svg")
    plt.close(fig)
    pts = [(z["param"], z["t0"]) for z in zeros if "t0" in z]
    if len(pts) >= 2:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(*zip(*pts), "o-")
        ax.set_xlabel(pname)
        ax.set_ylabel("first zero")
        fig.tight_layout()
        fig.savefig(outdir / "convergence.svg")
        plt.close(fig)


def run(cfg, command: str = "dimension") -> int:
    """Execute a validated config, write artifacts, return the exit code."""
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    collector = Collector()
    started = time.time()
    summary = {"version": __version__, "command": command, "config_hash": cfg.hash(),
               "config": cfg.canonical(), "estimator": cfg.estimator, "errors": []}
    code = EXIT_OK
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            curves, zeros, sentinel = compute(cfg, refine=command == "dimension", collector=collector)
            write_results(cfg, curves, outdir / f"results.{cfg.format}")
            summary["zeros"] = zeros
            good = [(z["param"], z["t0"]) for z in zeros if "t0" in z]
            if good:
                summary["zero_final"] = good[-1][1]
            if len(good) >= 2:
                rep = convergence_report(good, tol=cfg.tol_monotone)
                summary["convergence"] = {
                    "rows": [{"param": r.index, "zero": r.zero, "diff": r.diff,
                              "nondecreasing": r.nondecreasing} for r in rep.rows],
                    "monotone": rep.monotone,
                    "aitken_limit": rep.aitken, "aitken_note": rep.aitken_note,
                }
            if cfg.plot:
                write_plots(cfg, curves, zeros, outdir, collector)
            if sentinel:
                code = EXIT_SENTINEL
            elif command == "dimension" and any("error" in z for z in zeros):
                # the zero is the product of this command
                code = EXIT_ERROR
                summary["errors"].extend(z["error"] for z in zeros if "error" in z)
        except GeoPressureError as e:
            summary["errors"].append({"code": e.code, "message": str(e)})
            code = EXIT_ERROR
        except (ValueError, ArithmeticError) as e:
            summary["errors"].append({"code": "error", "message": str(e)})
            code = EXIT_ERROR
    for w in caught:
        collector.add(str(w.message))
    summary["warnings"] = collector.items
    summary["started"] = started
    summary["finished"] = time.time()
    summary["exit_code"] = code
    (outdir / "summary.json").write_text(json.dumps(summary, indent=1, default=str) + "\n")
    return code


def diagnose(cfg) -> int:
    """Telescope values over r, r/2, r/4 and the euclidean/spherical gap of
    the plain tree pressure at t = 1."""
    from .pullback import PullbackParams, telescope_diagnostic
    from .tree import PLAIN, run_tree

    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    collector = Collector()
    summary = {"version": __version__, "command": "diagnose", "config_hash": cfg.hash(),
               "config": cfg.canonical(), "telescope": [], "metric": [], "errors": []}
    code = EXIT_OK
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            spec = EstimatorSpec("tree-plain", cfg.map, cfg.estimator_params(cfg.depths[0]))
            z = spec.base_point()
            depths = cfg.n or [10]
            for n in depths:
                for r in (cfg.r, cfg.r / 2, cfg.r / 4):
                    tv = telescope_diagnostic(cfg.map, z, n, PullbackParams(r, cfg.kappa))
                    summary["telescope"].append({"n": n, "r": r, "max_abs": float(np.max(np.abs(tv))),
                                                 "max": float(np.max(tv)), "min": float(np.min(tv))})
                if cfg.map.is_polynomial:
                    e = run_tree(cfg.map, z, n, PLAIN, [1.0], metric="euclidean").values[0]
                    s = run_tree(cfg.map, z, n, PLAIN, [1.0], metric="spherical").values[0]
                    summary["metric"].append({"n": n, "euclidean": float(e), "spherical": float(s),
                                              "gap": float(abs(e - s))})
        except GeoPressureError as e:
            summary["errors"].append({"code": e.code, "message": str(e)})
            code = EXIT_ERROR
    for w in caught:
        collector.add(str(w.message))
    summary["warnings"] = collector.items
    summary["exit_code"] = code
    (outdir / "summary.json").write_text(json.dumps(summary, indent=1, default=str) + "\n")
    return code


def cache_command(args) -> int:
    from .cache import clear_cache, inspect_cache

    if args.action == "inspect":
        print(json.dumps(inspect_cache(args.cache_dir), indent=1))
    else:
        print(f"removed {clear_cache(args.cache_dir)} file(s)")
    return EXIT_OK


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "cache":
        return cache_command(args)
    try:
        data = merge_args(args, args.command)
        if args.command == "diagnose":
            data["estimator"] = data.get("estimator") or "tree-plain"
            if data["estimator"] not in TREE_ESTIMATORS:
                data["estimator"] = "tree-plain"
        cfg = build_config(data)
    except ConfigError as e:
        print(f"geopressure: config error: {e}", file=sys.stderr)
        return EXIT_ERROR
    if args.command == "diagnose":
        return diagnose(cfg)
    return run(cfg, args.command)


if __name__ == "__main__":
    sys.exit(main())
