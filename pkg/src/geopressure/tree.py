"""Backward orbit trees of a base point and the tree-pressure estimators.

Every estimator reduces to the same walk over ``f^-n(z)``: each branch carries
``log_plain = sum log|f'(z_k)|`` and a mode-specific ``log_weight``, and the
pressure at exponent t is ``(1/n) log sum exp(-t * log_weight)``.  Storing the
logs means one walk serves a whole t-grid.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from . import kernels
from .errors import BudgetError, GeoPressureWarning
from .green import trace_external_ray
from .mapcore import (
    EUCLIDEAN,
    MapSpec,
    critical_points,
    derivative_modulus,
    distance_to_critical_set,
    horner,
    polyder,
    preimages,
)

PLAIN, FUZZY, RESTRICTED, MSAMPLE, PULLBACK = range(5)
MODE_NAMES = {
    PLAIN: "tree-plain",
    FUZZY: "tree-fuzzy",
    RESTRICTED: "tree-restricted",
    MSAMPLE: "tree-msample",
    PULLBACK: "pullback",
}
DEFAULT_NODE_BUDGET = 1 << 24


@dataclass(frozen=True)
class FuzzyParams:
    delta: float = 1e-3
    Delta: Optional[float] = None
    m: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.Delta is not None:
            if not self.Delta > 0:
                raise ValueError("Delta must be positive")
            if self.delta > self.Delta / 10 * (1 + 1e-12):
                raise ValueError("delta must be at most Delta/10")

    @property
    def orientation(self) -> float:
        """Rotation of the sampling polygon; the real axis when seed is 0."""
        if self.seed == 0:
            return 0.0
        return float(np.random.default_rng(self.seed).uniform(0.0, 2 * math.pi))


@dataclass(frozen=True)
class BranchAggregate:
    endpoint: complex
    depth: int
    log_plain: float
    log_fuzzy: float
    pruned: bool = False
    saturated_steps: int = 0


@dataclass(frozen=True)
class PressureSample:
    estimator: str
    params: dict
    t: float
    value: float
    branch_count: int
    pruned: int = 0
    flags: tuple = ()


@dataclass
class TreeRun:
    """Raw outcome of one tree walk over a t-grid."""

    n: int
    ts: np.ndarray
    values: np.ndarray
    leaves: int
    pruned: int = 0
    collapses: int = 0
    saturated_steps: int = 0
    underflow: int = 0
    records: Optional[dict] = None
    flags: list = field(default_factory=list)

    @property
    def saturation_fraction(self) -> float:
        return self.saturated_steps / (self.leaves * self.n) if self.leaves else 0.0


# ---------------------------------------------------------------------------
# derivative bounds

def deriv_bounds_on_disk(f: MapSpec, center: complex, radius: float,
                         metric: Optional[str] = None) -> tuple:
    """Lower and upper bounds of |f'| on the closed disk B(center, radius).

    Exact for z**d + c; a Taylor-remainder enclosure for other polynomials.
    Rational maps (and the spherical metric) fall back to sampling the
    boundary circle, which is heuristic.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    metric = metric or f.default_metric
    center = complex(center)
    if f.kind == "unicritical" and metric == EUCLIDEAN:
        d = f.degree
        a = abs(center)
        return d * max(0.0, a - radius) ** (d - 1), d * (a + radius) ** (d - 1)
    if f.kind == "polynomial" and metric == EUCLIDEAN:
        coeffs = polyder(f._num)
        terms = []
        fact = 1.0
        j = 0
        while coeffs.size and np.any(coeffs != 0):
            terms.append(abs(horner(coeffs, center)[0]) * radius ** j / fact)
            coeffs = polyder(coeffs)
            j += 1
            fact *= j
        rest = sum(terms[1:])
        return float(max(0.0, terms[0] - rest)), float(terms[0] + rest)
    ring = center + radius * np.exp(2j * np.pi * np.arange(64) / 64)
    vals = derivative_modulus(f, np.concatenate([[center], ring]), metric)
    return float(np.min(vals)), float(np.max(vals))


# ---------------------------------------------------------------------------
# base point

def select_base_point(f: MapSpec, eta: float = 0.2, theta=0) -> complex:
    """Point at potential eta/2 on the external ray of angle theta: outside
    J(f) and off the postcritical set for connected Julia sets."""
    ray = trace_external_ray(f, theta, eta, eta / 2)
    return complex(ray.points[-1])


# ---------------------------------------------------------------------------
# the walk

def _merge(states):
    mx = np.full_like(states[0][0], -np.inf)
    for m, _ in states:
        mx = np.maximum(mx, m)
    sm = np.zeros_like(mx)
    for m, s in states:
        with np.errstate(invalid="ignore"):
            part = s * np.exp(m - mx)
        sm += np.where(np.isfinite(m), part, 0.0)
    return mx, sm


def _check_budget(f: MapSpec, n: int, budget: int):
    if f.degree ** n > budget:
        raise BudgetError(f"degree^n = {f.degree}^{n} exceeds the node budget {budget}")


def run_tree(f: MapSpec, z: complex, n: int, mode: int, ts: Sequence[float], *,
             delta: float = 0.0, Delta: float = 0.0, m: int = 2, orientation: float = 0.0,
             r0: float = 0.0, kappa: float = 1.2, threads: int = 1,
             backend: Optional[str] = None, record: bool = False,
             node_budget: int = DEFAULT_NODE_BUDGET, metric: Optional[str] = None) -> TreeRun:
    """Walk the depth-n backward tree of z once and evaluate a t-grid."""
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_budget(f, n, node_budget)
    ts = np.asarray(ts, dtype=float)
    if np.any(ts < 0):
        raise ValueError("exponents t must be nonnegative")
    metric = metric or f.default_metric
    if f.kind == "unicritical" and metric == EUCLIDEAN:
        out = _run_unicritical(f, complex(z), n, mode, ts, delta, Delta, m, orientation,
                               r0, kappa, threads, backend, record)
    else:
        out = _run_generic(f, complex(z), n, mode, ts, delta, Delta, m, orientation,
                           r0, kappa, record, metric)
    if out.collapses:
        msg = f"exact critical-value collapse at {out.collapses} node(s); branches repeated with multiplicity"
        out.flags.append(msg)
        warnings.warn(msg, GeoPressureWarning, stacklevel=2)
    return out


def _run_unicritical(f, z, n, mode, ts, delta, Delta, m, orientation, r0, kappa,
                     threads, backend, record) -> TreeRun:
    kern = kernels.get(backend)
    d = f.degree
    split = min(2, n - 1)
    jobs = list(range(d ** split))

    def one(idx):
        return kern(z, f.c, d, n, mode, delta, Delta, m, orientation, r0, kappa,
                    np.ascontiguousarray(ts), split, idx, record)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, jobs))
    else:
        parts = [one(i) for i in jobs]
    mx, sm = _merge([(p["max"], p["sum"]) for p in parts])
    leaves = sum(int(p["leaves"]) for p in parts)
    with np.errstate(divide="ignore"):
        values = (mx + np.log(sm)) / n if leaves else np.full(ts.shape, -np.inf)
    run = TreeRun(
        n=n, ts=ts, values=values, leaves=leaves,
        pruned=sum(int(p["pruned"]) for p in parts),
        collapses=sum(int(p["collapses"]) for p in parts),
        saturated_steps=sum(int(p["saturated_steps"]) for p in parts),
        underflow=sum(int(p["underflow"]) for p in parts),
    )
    if record:
        run.records = {
            key: np.concatenate([p[key] for p in parts])
            for key in ("endpoints", "log_plain", "log_weight", "saturated")
        }
    return run


def _run_generic(f, z, n, mode, ts, delta, Delta, m, orientation, r0, kappa,
                 record, metric) -> TreeRun:
    """Breadth-first walk for general polynomial and rational maps, solving
    preimages numerically and warm-starting each solve from the previous one."""
    crit = critical_points(f)
    d = f.degree
    nodes = [(z, 0.0, 0.0, r0, 0)]
    pruned = collapses = underflow = 0
    offs = 0.5 * delta * np.exp(1j * (orientation + 2 * np.pi * np.arange(max(m, 1)) / max(m, 1)))
    warm = None
    for k in range(n):
        nxt = []
        for pt, lp, lw, rho, st in nodes:
            pre = preimages(f, pt, init=warm)
            warm = [w for w, mult in pre for _ in range(mult)]
            if any(mult > 1 for _, mult in pre):
                collapses += 1
            for w, mult in pre:
                if mode == RESTRICTED and distance_to_critical_set(f, w, crit) <= Delta:
                    pruned += mult * d ** (n - k - 1)
                    continue
                dv = derivative_modulus(f, w, metric)
                lstep = math.log(dv) if dv > 0 else -math.inf
                new_rho, new_st = 0.0, st
                if mode == PLAIN:
                    lwstep = lstep
                elif mode in (FUZZY, RESTRICTED):
                    lwstep = math.log(deriv_bounds_on_disk(f, w, delta, metric)[1])
                elif mode == MSAMPLE:
                    lwstep = math.log(float(np.max(derivative_modulus(f, w + offs, metric))))
                else:
                    if dv < 1e-12:
                        underflow += 1
                        new_rho = rho
                    else:
                        new_rho = kappa * rho / dv
                    cap = 0.5 * distance_to_critical_set(f, w, crit)
                    if new_rho > cap:
                        new_rho = cap
                        new_st = st + 1
                    lwstep = math.log(deriv_bounds_on_disk(f, w, new_rho, metric)[1])
                for _ in range(mult):
                    nxt.append((w, lp + lstep, lw + lwstep, new_rho, new_st))
        nodes = nxt
    lw = np.array([nd[2] for nd in nodes])
    if nodes:
        x = -ts[:, None] * lw[None, :]
        x[ts == 0, :] = 0.0
        mx = np.max(x, axis=1)
        with np.errstate(invalid="ignore"):
            values = (mx + np.log(np.sum(np.exp(x - mx[:, None]), axis=1))) / n
    else:
        values = np.full(ts.shape, -np.inf)
    run = TreeRun(n=n, ts=ts, values=values, leaves=len(nodes), pruned=pruned,
                  collapses=collapses, underflow=underflow,
                  saturated_steps=int(sum(nd[4] for nd in nodes)))
    if record:
        run.records = {
            "endpoints": np.array([nd[0] for nd in nodes], dtype=complex),
            "log_plain": np.array([nd[1] for nd in nodes]),
            "log_weight": lw,
            "saturated": np.array([nd[4] for nd in nodes], dtype=np.int64),
        }
    return run


# ---------------------------------------------------------------------------
# public operations

class TreeExpansion:
    """Iterable stream of :class:`BranchAggregate` plus prune statistics."""

    def __init__(self, run: TreeRun, n: int, visitor: Optional[Callable] = None):
        self.run = run
        self.n = n
        self.visitor = visitor

    @property
    def pruned(self) -> int:
        return self.run.pruned

    @property
    def branch_count(self) -> int:
        return self.run.leaves

    def __len__(self):
        return self.run.leaves

    def __iter__(self) -> Iterator[BranchAggregate]:
        rec = self.run.records
        for i in range(self.run.leaves):
            agg = BranchAggregate(
                endpoint=complex(rec["endpoints"][i]), depth=self.n,
                log_plain=float(rec["log_plain"][i]), log_fuzzy=float(rec["log_weight"][i]),
                saturated_steps=int(rec["saturated"][i]),
            )
            if self.visitor is not None:
                self.visitor(agg)
            yield agg


def expand_tree(f: MapSpec, z: complex, n: int, params: Optional[FuzzyParams] = None,
                visitor: Optional[Callable] = None, **opts) -> TreeExpansion:
    """Enumerate the depth-n backward branches of z.

    ``log_fuzzy`` uses disk suprema of radius ``params.delta``; when
    ``params.Delta`` is set, subtrees through points within Delta of the
    critical set are pruned and counted in ``.pruned``.
    """
    params = params or FuzzyParams()
    mode = RESTRICTED if params.Delta is not None else FUZZY
    run = run_tree(f, z, n, mode, [1.0], delta=params.delta, Delta=params.Delta or 0.0,
                   record=True, **opts)
    return TreeExpansion(run, n, visitor)


def _samples(run: TreeRun, estimator: str, params: dict) -> list:
    flags = tuple(run.flags)
    out = []
    for t, v in zip(run.ts, run.values):
        out.append(PressureSample(estimator, dict(params), float(t),
                                  float(v) if run.leaves else -math.inf,
                                  run.leaves, run.pruned, flags))
    return out


def plain_tree_pressure(f: MapSpec, z: complex, n: int, t_grid: Sequence[float], **opts) -> list:
    """(1/n) log sum over f^-n(z) of |(f^n)'(v)|^-t for each t."""
    run = run_tree(f, z, n, PLAIN, t_grid, **opts)
    return _samples(run, "tree-plain", {"n": n, "z": complex(z)})


def fuzzy_tree_pressure(f: MapSpec, z: complex, n: int, delta: float,
                        t_grid: Sequence[float], **opts) -> list:
    if not delta > 0:
        raise ValueError("delta must be positive")
    run = run_tree(f, z, n, FUZZY, t_grid, delta=delta, **opts)
    return _samples(run, "tree-fuzzy", {"n": n, "delta": delta, "z": complex(z)})


def restricted_fuzzy_tree_pressure(f: MapSpec, z: complex, n: int, Delta: float, delta: float,
                                   t_grid: Sequence[float], **opts) -> list:
    """Fuzzy tree pressure over branches staying farther than Delta from the
    critical set; -inf with branch_count 0 when every branch is pruned."""
    FuzzyParams(delta=delta, Delta=Delta)
    run = run_tree(f, z, n, RESTRICTED, t_grid, delta=delta, Delta=Delta, **opts)
    if run.leaves == 0:
        msg = f"all branches pruned ({run.pruned} leaves removed)"
        run.flags.append(msg)
        warnings.warn(msg, GeoPressureWarning, stacklevel=2)
    return _samples(run, "tree-restricted", {"n": n, "delta": delta, "Delta": Delta, "z": complex(z)})


def multi_sample_tree_pressure(f: MapSpec, z: complex, n: int, delta: float, m: int,
                               t_grid: Sequence[float], seed: int = 0, **opts) -> list:
    """Per-step factor is the smallest |f'|^-t over the vertices of a regular
    m-gon of diameter delta centred at the branch point."""
    if m < 2:
        raise ValueError("m must be >= 2")
    params = FuzzyParams(delta=delta, m=m, seed=seed)
    run = run_tree(f, z, n, MSAMPLE, t_grid, delta=delta, m=m,
                   orientation=params.orientation, **opts)
    return _samples(run, "tree-msample", {"n": n, "delta": delta, "m": m, "seed": seed,
                                          "z": complex(z)})

