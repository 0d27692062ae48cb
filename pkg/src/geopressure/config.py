"""Run configuration: a YAML or JSON file plus command-line overrides.

Schema (all keys optional except ``map`` and ``estimator``)::

    map:        {kind: unicritical, degree: 2, c: [-0.5, 0.0]}
                {kind: polynomial, numerator: [a0, a1, ...]}
                {kind: rational, numerator: [...], denominator: [...]}
    estimator:  tree-plain | tree-fuzzy | tree-restricted | tree-msample | pullback |
                mcm-plain | mcm-fuzzy | mcm-restricted | mcm-restricted-fuzzy |
                mcm-double | mcm-multiple
    n:          tree depth, an integer, a list, or "lo..hi"
    N:          puzzle depth, same forms as n
    delta, Delta, m, seed, r, kappa, eta, theta, z, angles
    schedule:   {scale: 1.0, offset: 0.0}          # A(N) = offset + scale * N
    fuzzy_method: cloud | disk
    in_piece:   false
    t:          {min: 0.1, max: 2.0, step: 0.05}   # or an explicit list
    tolerances: {perron: 1e-10, zero: 1e-4, monotone: 1e-6}
    node_budget, threads, backend
    output:     {out: results, format: csv, plot: false, cache_dir: null, cache_format: npz}

Complex numbers may be written as numbers, [re, im] pairs or strings like "-0.5+0.1j".
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
import yaml

from .dimension import ESTIMATORS, MCM_ESTIMATORS
from .errors import ConfigError
from .mapcore import MapSpec
from .tree import DEFAULT_NODE_BUDGET

TOP_KEYS = {
    "map", "estimator", "n", "N", "delta", "Delta", "m", "seed", "r", "kappa", "eta", "theta",
    "z", "angles", "schedule", "fuzzy_method", "in_piece", "t", "tolerances", "node_budget",
    "threads", "backend", "output",
}
MAP_KEYS = {"kind", "degree", "c", "numerator", "denominator"}
T_KEYS = {"min", "max", "step"}
TOL_KEYS = {"perron", "zero", "monotone"}
SCHEDULE_KEYS = {"scale", "offset"}
OUTPUT_KEYS = {"out", "format", "plot", "cache_dir", "cache_format"}
THREADS_ENV = "GEOPRESSURE_THREADS"


def _complex(v, path: str) -> complex:
    try:
        if isinstance(v, (list, tuple)):
            if len(v) != 2:
                raise ValueError
            return complex(float(v[0]), float(v[1]))
        if isinstance(v, str):
            return complex(v.replace(" ", "").replace("i", "j"))
        return complex(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: expected a complex number, got {v!r}") from None


def _depths(v, path: str) -> list:
    if v is None:
        return []
    if isinstance(v, int) and not isinstance(v, bool):
        out = [v]
    elif isinstance(v, str) and ".." in v:
        lo, hi = v.split("..")
        out = list(range(int(lo), int(hi) + 1))
    elif isinstance(v, (list, tuple)):
        out = [int(x) for x in v]
    else:
        try:
            out = [int(v)]
        except (TypeError, ValueError):
            raise ConfigError(f"{path}: expected an integer, list or 'lo..hi'") from None
    if any(x < 0 for x in out):
        raise ConfigError(f"{path}: depths must be nonnegative")
    return out


def _check_keys(data: dict, allowed: set, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    extra = sorted(set(data) - allowed)
    if extra:
        where = f"{path}." if path else ""
        raise ConfigError("unknown key(s): " + ", ".join(where + k for k in extra))


@dataclass
class RunConfig:
    map: MapSpec
    estimator: str
    n: list = field(default_factory=list)
    N: list = field(default_factory=list)
    delta: Optional[float] = None
    Delta: Optional[float] = None
    m: int = 2
    seed: int = 0
    r: float = 0.1
    kappa: float = 1.2
    eta: float = 0.2
    theta: str = "0"
    z: Optional[complex] = None
    angles: Optional[list] = None
    schedule_scale: float = 1.0
    schedule_offset: float = 0.0
    fuzzy_method: str = "cloud"
    in_piece: bool = False
    t_grid: list = field(default_factory=list)
    tol_perron: float = 1e-10
    tol_zero: float = 1e-4
    tol_monotone: float = 1e-6
    node_budget: int = DEFAULT_NODE_BUDGET
    threads: int = 1
    backend: Optional[str] = None
    out: str = "results"
    format: str = "csv"
    plot: bool = False
    cache_dir: Optional[str] = None
    cache_format: str = "npz"

    @property
    def is_tree(self) -> bool:
        return self.estimator not in MCM_ESTIMATORS

    @property
    def depths(self) -> list:
        return self.n if self.is_tree else self.N

    def schedule(self, N: int) -> float:
        return self.schedule_offset + self.schedule_scale * N

    def estimator_params(self, depth: int) -> dict:
        if self.is_tree:
            p = {"n": depth, "delta": self.delta, "Delta": self.Delta, "m": self.m,
                 "seed": self.seed, "r": self.r, "kappa": self.kappa, "eta": self.eta,
                 "theta": self.theta, "z": self.z, "threads": self.threads,
                 "backend": self.backend, "node_budget": self.node_budget}
        else:
            p = {"N": depth, "eta": self.eta, "angles": self.angles, "seed": self.seed,
                 "schedule": self.schedule, "fuzzy_method": self.fuzzy_method,
                 "in_piece": self.in_piece}
        return p

    def canonical(self) -> dict:
        """Plain-data view used for hashing and summaries (output keys excluded)."""
        d = asdict(self)
        d["map"] = self.map.to_dict()
        d["z"] = None if self.z is None else [self.z.real, self.z.imag]
        for k in ("out", "format", "plot", "cache_dir", "cache_format", "threads", "backend"):
            d.pop(k)
        return d

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _parse_map(data, path="map") -> MapSpec:
    _check_keys(data, MAP_KEYS, path)
    kind = data.get("kind", "unicritical")
    try:
        if kind == "unicritical":
            return MapSpec.unicritical(int(data.get("degree", 2)), _complex(data.get("c", 0), f"{path}.c"))
        if kind == "polynomial":
            return MapSpec.polynomial([_complex(a, f"{path}.numerator") for a in data["numerator"]])
        if kind == "rational":
            return MapSpec.rational([_complex(a, f"{path}.numerator") for a in data["numerator"]],
                                    [_complex(a, f"{path}.denominator") for a in data["denominator"]])
    except KeyError as e:
        raise ConfigError(f"{path}.{e.args[0]}: required for kind {kind!r}") from None
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from None
    raise ConfigError(f"{path}.kind: unknown map kind {kind!r}")


def build_config(data: dict) -> RunConfig:
    """Validate a plain mapping and fill defaults."""
    _check_keys(data, TOP_KEYS, "")
    if "map" not in data:
        raise ConfigError("map: required")
    f = _parse_map(data["map"])
    est = data.get("estimator")
    if est is None:
        raise ConfigError(f"estimator: required; valid ids: {', '.join(ESTIMATORS)}")
    if est not in ESTIMATORS:
        raise ConfigError(f"estimator: unknown estimator {est!r}; valid ids: {', '.join(ESTIMATORS)}")
    cfg = RunConfig(map=f, estimator=est)
    cfg.n = _depths(data.get("n"), "n")
    cfg.N = _depths(data.get("N"), "N")
    for key in ("delta", "Delta", "r", "kappa", "eta"):
        if data.get(key) is not None:
            try:
                setattr(cfg, key, float(data[key]))
            except (TypeError, ValueError):
                raise ConfigError(f"{key}: expected a number") from None
    for key in ("m", "seed", "node_budget"):
        if data.get(key) is not None:
            setattr(cfg, key, int(data[key]))
    if data.get("theta") is not None:
        cfg.theta = str(data["theta"])
    if data.get("z") is not None:
        cfg.z = _complex(data["z"], "z")
    if data.get("angles") is not None:
        try:
            cfg.angles = [str(Fraction(str(a))) for a in data["angles"]]
        except (TypeError, ValueError, ZeroDivisionError):
            raise ConfigError("angles: expected rationals such as 0, '1/2', '1/3'") from None
    sched = data.get("schedule") or {}
    _check_keys(sched, SCHEDULE_KEYS, "schedule")
    cfg.schedule_scale = float(sched.get("scale", 1.0))
    cfg.schedule_offset = float(sched.get("offset", 0.0))
    cfg.fuzzy_method = data.get("fuzzy_method", "cloud")
    if cfg.fuzzy_method not in ("cloud", "disk"):
        raise ConfigError("fuzzy_method: expected 'cloud' or 'disk'")
    cfg.in_piece = bool(data.get("in_piece", False))
    tg = data.get("t", {})
    if isinstance(tg, dict):
        _check_keys(tg, T_KEYS, "t")
        lo, hi, st = float(tg.get("min", 0.1)), float(tg.get("max", 2.0)), float(tg.get("step", 0.05))
        if not (0 <= lo < hi and st > 0):
            raise ConfigError("t: need 0 <= min < max and step > 0")
        k = int(np.floor((hi - lo) / st + 1e-9))
        cfg.t_grid = [round(lo + i * st, 12) for i in range(k + 1)]
    else:
        cfg.t_grid = sorted(float(x) for x in tg)
        if len(cfg.t_grid) < 2 or min(cfg.t_grid) < 0:
            raise ConfigError("t: need at least two nonnegative values")
    tol = data.get("tolerances") or {}
    _check_keys(tol, TOL_KEYS, "tolerances")
    cfg.tol_perron = float(tol.get("perron", cfg.tol_perron))
    cfg.tol_zero = float(tol.get("zero", cfg.tol_zero))
    cfg.tol_monotone = float(tol.get("monotone", cfg.tol_monotone))
    if data.get("threads") is not None:
        cfg.threads = int(data["threads"])
    elif os.environ.get(THREADS_ENV):
        cfg.threads = int(os.environ[THREADS_ENV])
    cfg.backend = data.get("backend")
    out = data.get("output") or {}
    _check_keys(out, OUTPUT_KEYS, "output")
    cfg.out = str(out.get("out", cfg.out))
    cfg.format = out.get("format", cfg.format)
    if cfg.format not in ("csv", "json"):
        raise ConfigError("output.format: expected csv or json")
    cfg.plot = bool(out.get("plot", False))
    cfg.cache_dir = out.get("cache_dir")
    cfg.cache_format = out.get("cache_format", "npz")
    if cfg.cache_format not in ("npz", "json"):
        raise ConfigError("output.cache_format: expected npz or json")
    _fill_and_validate(cfg)
    return cfg


def _fill_and_validate(cfg: RunConfig):
    est = cfg.estimator
    if cfg.is_tree:
        if not cfg.n:
            raise ConfigError(f"n: required for {est}")
        if min(cfg.n) < 1:
            raise ConfigError("n: tree depth must be >= 1")
        if cfg.map.degree ** max(cfg.n) > cfg.node_budget:
            raise ConfigError(f"n: degree^n exceeds node_budget {cfg.node_budget}")
    else:
        if not cfg.N:
            raise ConfigError(f"N: required for {est}")
        if cfg.map.kind != "unicritical":
            raise ConfigError("McMullen estimators need a unicritical map")
    if est == "tree-restricted" or (est == "tree-fuzzy" and cfg.delta is None):
        if cfg.Delta is None:
            cfg.Delta = 1e-2
        if cfg.delta is None:
            cfg.delta = cfg.Delta / 10
    if est == "tree-msample" and cfg.delta is None:
        cfg.delta = 1e-3
    if est == "tree-restricted" and cfg.delta > cfg.Delta / 10 * (1 + 1e-12):
        raise ConfigError("delta must be at most Delta/10")
    if cfg.delta is not None and cfg.delta <= 0:
        raise ConfigError("delta: must be positive")
    if est == "tree-msample" and cfg.m < 2:
        raise ConfigError("m: must be >= 2")
    if cfg.r <= 0 or cfg.kappa < 1:
        raise ConfigError("r must be positive and kappa >= 1")
    if cfg.eta <= 0:
        raise ConfigError("eta: must be positive")
    if cfg.threads < 1:
        raise ConfigError("threads: must be >= 1")
    if not cfg.map.is_polynomial and cfg.z is None:
        raise ConfigError("z: a base point is required for rational maps")


def load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    try:
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot parse config {path}: {e}") from None
    return data or {}


def parse_config(path) -> RunConfig:
    return build_config(load_config_file(path))
