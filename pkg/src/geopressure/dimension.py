"""Pressure curves from any estimator, their first zeros and convergence tables."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import GeoPressureWarning, NoSignChangeError
from .mapcore import MapSpec
from .spectral import entrywise_power, spectral_radius

TREE_ESTIMATORS = ("tree-plain", "tree-fuzzy", "tree-restricted", "tree-msample", "pullback")
MCM_ESTIMATORS = ("mcm-plain", "mcm-fuzzy", "mcm-restricted", "mcm-restricted-fuzzy",
                  "mcm-double", "mcm-multiple")
ESTIMATORS = TREE_ESTIMATORS + MCM_ESTIMATORS
FROM_BELOW = {"tree-fuzzy", "tree-restricted", "tree-msample", "pullback", "mcm-fuzzy",
              "mcm-restricted", "mcm-restricted-fuzzy", "mcm-double"}
_MCM_MODE = {"mcm-plain": "plain", "mcm-fuzzy": "fuzzy", "mcm-restricted": "restricted",
             "mcm-restricted-fuzzy": "restricted-fuzzy", "mcm-double": "double-sample",
             "mcm-multiple": "multiple"}


@dataclass
class PressureCurve:
    estimator: str
    params: dict
    t: np.ndarray
    values: np.ndarray
    counts: Optional[np.ndarray] = None
    provenance: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    evaluator: Optional[Callable[[float], float]] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.t.shape != self.values.shape:
            raise ValueError("t and values must have equal length")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("t must be strictly increasing")
        if np.any(np.isnan(self.values)) or np.any(self.values == np.inf):
            raise ValueError("values must be finite or -inf")

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.values)

    @property
    def all_sentinel(self) -> bool:
        return not np.any(self.finite)


@dataclass
class DimensionEstimate:
    t0: float
    method: str
    params: dict
    bracket_width: float
    monotone: bool
    is_lower_bound_claim: bool
    flags: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# estimator specs

_PUZZLES: dict = {}


def puzzle_levels(f: MapSpec, depth: int, eta: float = 0.2, angles=None) -> list:
    """Puzzle levels 0..depth, memoised per (map, eta, angles)."""
    from .puzzle import build_base_puzzle, refine_puzzle

    key = (f, float(eta), None if angles is None else tuple(str(a) for a in angles))
    levels = _PUZZLES.get(key)
    if levels is None:
        levels = _PUZZLES[key] = [build_base_puzzle(f, eta, angles)]
    while len(levels) <= depth:
        levels.append(refine_puzzle(levels[-1]))
    return levels[:depth + 1]


@dataclass
class EstimatorSpec:
    """An estimator id with its structural parameters.

    Tree estimators read n, z (default: the base-point heuristic), delta,
    Delta, m, seed, r, kappa, threads; McMullen ones read N, eta, angles,
    schedule, seed, fuzzy_method, in_piece.
    """

    estimator: str
    f: MapSpec
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}; valid: {', '.join(ESTIMATORS)}")

    @property
    def is_tree(self) -> bool:
        return self.estimator in TREE_ESTIMATORS

    def base_point(self) -> complex:
        from .tree import select_base_point

        p = self.params
        if p.get("z") is not None:
            return complex(p["z"])
        return select_base_point(self.f, p.get("eta", 0.2), p.get("theta", 0))

    def tree_values(self, ts) -> tuple:
        from . import tree as T
        from .pullback import PullbackParams, annotate

        p = self.params
        z = self.base_point()
        n = int(p["n"])
        opts = {k: p[k] for k in ("threads", "backend", "node_budget") if p.get(k) is not None}
        est = self.estimator
        if est == "tree-plain":
            run = T.run_tree(self.f, z, n, T.PLAIN, ts, **opts)
        elif est == "tree-fuzzy":
            run = T.run_tree(self.f, z, n, T.FUZZY, ts, delta=p["delta"], **opts)
        elif est == "tree-restricted":
            T.FuzzyParams(delta=p["delta"], Delta=p["Delta"])
            run = T.run_tree(self.f, z, n, T.RESTRICTED, ts, delta=p["delta"], Delta=p["Delta"], **opts)
        elif est == "tree-msample":
            fp = T.FuzzyParams(delta=p["delta"], m=p.get("m", 2), seed=p.get("seed", 0))
            run = T.run_tree(self.f, z, n, T.MSAMPLE, ts, delta=fp.delta, m=fp.m,
                             orientation=fp.orientation, **opts)
        else:
            pp = PullbackParams(p.get("r", 0.1), p.get("kappa", 1.2))
            pp.validate(self.f, z)
            run = annotate(T.run_tree(self.f, z, n, T.PULLBACK, ts, r0=pp.r, kappa=pp.kappa, **opts))
        if run.leaves == 0:
            msg = f"{est}: all branches pruned at n={n}"
            run.flags.append(msg)
            warnings.warn(msg, GeoPressureWarning, stacklevel=2)
        vals = run.values if run.leaves else np.full(len(run.ts), -np.inf)
        return vals, np.full(len(run.ts), run.leaves), run.flags

    def matrix(self):
        from .puzzle import RestrictionSchedule, assemble_matrix

        p = self.params
        level = puzzle_levels(self.f, int(p["N"]), p.get("eta", 0.2), p.get("angles"))[-1]
        sched = p.get("schedule") or RestrictionSchedule()
        if not isinstance(sched, RestrictionSchedule):
            sched = RestrictionSchedule(sched)
        return assemble_matrix(level, _MCM_MODE[self.estimator], sched, p.get("seed", 0),
                               p.get("fuzzy_method", "cloud"), p.get("in_piece", False))

    def evaluate(self, ts) -> tuple:
        """(values, counts, flags) over a t-grid."""
        ts = np.asarray(ts, dtype=float)
        if self.is_tree:
            return self.tree_values(ts)
        M = self.matrix()
        flags = [M.note] if M.note else []
        vals = []
        for t in ts:
            res = spectral_radius(entrywise_power(M, t), tol=1e-12)
            flags.extend(x for x in res.flags if x not in flags)
            vals.append(math.log(res.radius) if res.radius > 0 else -math.inf)
        return np.array(vals), np.full(len(ts), M.dimension), flags

    def __call__(self, t: float) -> float:
        return float(self.evaluate([t])[0][0])


def pressure_curve(spec: EstimatorSpec, t_grid: Sequence[float]) -> PressureCurve:
    ts = np.asarray(t_grid, dtype=float)
    vals, counts, flags = spec.evaluate(ts)
    prov = {"tree_depth": spec.params.get("n")} if spec.is_tree else \
        {"puzzle_depth": spec.params.get("N"), "matrix_mode": _MCM_MODE[spec.estimator]}
    curve = PressureCurve(spec.estimator, dict(spec.params), ts, vals, counts, prov,
                          list(flags), evaluator=spec)
    if curve.all_sentinel:
        curve.flags.append("all samples are sentinels")
    return curve


# ---------------------------------------------------------------------------
# zeros

def first_zero(curve: PressureCurve, refine: bool = False, tol: float = 1e-4) -> DimensionEstimate:
    """First crossing from positive to nonpositive values in increasing t.

    Sentinel samples are skipped.  With refine, the crossing cell is narrowed
    by re-invoking the curve's estimator until it is at most tol wide.
    """
    ok = curve.finite
    t, v = curve.t[ok], curve.values[ok]
    if t.size < 2:
        raise NoSignChangeError("fewer than two finite samples")
    cross = np.flatnonzero((v[:-1] > 0) & (v[1:] <= 0))
    if cross.size == 0:
        raise NoSignChangeError(f"no sign change: values in [{v.min():.6g}, {v.max():.6g}]")
    k = int(cross[0])
    a, b, fa, fb = t[k], t[k + 1], v[k], v[k + 1]
    monotone = bool(np.all(np.diff(v) <= 0))
    flags = list(curve.flags)
    if refine and curve.evaluator is not None and b - a > tol:
        if fb == 0:
            t0, width = b, 0.0
        else:
            g = lambda s: max(curve.evaluator(s), -1e300)
            t0 = brentq(g, a, b, xtol=tol * 1e-2)
            width = tol * 1e-2
    else:
        t0 = a + fa * (b - a) / (fa - fb)
        width = b - a
    if not monotone:
        flags.append("sampled pressure values are not nonincreasing")
    if not 0 < t0 <= 2:
        flags.append(f"zero {t0:.6g} outside (0, 2]")
    return DimensionEstimate(float(t0), curve.estimator, dict(curve.params), float(width),
                             monotone, curve.estimator in FROM_BELOW, flags)


@dataclass
class ConvergenceRow:
    index: object
    zero: float
    diff: Optional[float]
    nondecreasing: Optional[bool]


@dataclass
class ConvergenceReport:
    rows: list
    monotone: bool
    aitken: Optional[float]
    aitken_note: str = "heuristic extrapolation; not part of any lower-bound claim"

    @property
    def zeros(self) -> list:
        return [r.zero for r in self.rows]

    @property
    def final(self) -> float:
        return self.rows[-1].zero


def aitken(x: Sequence[float]) -> Optional[float]:
    if len(x) < 3:
        return None
    a, b, c = x[-3:]
    den = c - 2 * b + a
    if den == 0:
        return float(c)
    return float(c - (c - b) ** 2 / den)


def convergence_report(family, refine: bool = False, tol: float = 1e-6) -> ConvergenceReport:
    """Zeros of a family of curves (mapping index -> curve, or list of
    (index, curve) / DimensionEstimate pairs), their successive differences
    and nondecreasing verdicts within ``tol``."""
    items = list(family.items()) if isinstance(family, dict) else list(family)
    if len(items) < 2:
        raise ValueError("a convergence report needs at least two curves")
    zeros = []
    for idx, obj in items:
        z = obj if isinstance(obj, (float, int)) else \
            (obj.t0 if isinstance(obj, DimensionEstimate) else first_zero(obj, refine).t0)
        zeros.append((idx, float(z)))
    rows = []
    for k, (idx, z) in enumerate(zeros):
        if k == 0:
            rows.append(ConvergenceRow(idx, z, None, None))
        else:
            d = z - zeros[k - 1][1]
            rows.append(ConvergenceRow(idx, z, d, d >= -tol))
    mono = all(r.nondecreasing for r in rows[1:])
    return ConvergenceReport(rows, mono, aitken([z for _, z in zeros]))
