"""Pullback-infimum tree pressure with first-order disk enclosures.

A disk around z is pulled back along each branch; at every step its radius is
divided by |f'| of the branch point, inflated by a safety factor and capped at
half the distance to the critical set.  These disks are heuristic stand-ins for
the true pullback components and are flagged as non-rigorous.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DerivativeUnderflowError, GeoPressureWarning
from .mapcore import MapSpec, derivative_modulus, distance_to_critical_set
from .tree import PULLBACK, _samples, run_tree

RIGOROUS = False


@dataclass(frozen=True)
class DiskEnclosure:
    center: complex
    radius: float
    kappa: float = 1.2
    saturated: bool = False

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.kappa < 1:
            raise ValueError("kappa must be >= 1")


@dataclass(frozen=True)
class PullbackParams:
    r: float = 0.1
    kappa: float = 1.2
    max_fraction: float = 0.5

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("r must be positive")
        if self.kappa < 1:
            raise ValueError("kappa must be >= 1")

    def validate(self, f: MapSpec, z: complex):
        dist = distance_to_critical_set(f, z)
        if self.r >= self.max_fraction * dist:
            raise ValueError(f"r = {self.r} must be below {self.max_fraction} x dist(z, Crit) = "
                             f"{self.max_fraction * dist:.6g}")


def propagate_disk(f: MapSpec, w: complex, image: DiskEnclosure,
                   metric: Optional[str] = None) -> DiskEnclosure:
    dv = float(derivative_modulus(f, w, metric or "euclidean"))
    if dv < 1e-12:
        raise DerivativeUnderflowError(f"|f'({w})| = {dv:.3e} below 1e-12")
    radius = image.kappa * image.radius / dv
    cap = 0.5 * distance_to_critical_set(f, w)
    saturated = radius > cap
    return DiskEnclosure(complex(w), cap if saturated else radius, image.kappa, saturated)


def _run(f, z, n, params, t_grid, **opts):
    params.validate(f, z)
    return run_tree(f, z, n, PULLBACK, t_grid, r0=params.r, kappa=params.kappa, **opts)


def annotate(run):
    """Attach the saturation fraction and the non-rigour note to a pullback
    run, warning when more than half of the steps were capped."""
    frac = run.saturation_fraction
    run.flags.append(f"saturated_fraction={frac:.6g}")
    run.flags.append("enclosures heuristic (first-order), not rigorous")
    if frac > 0.5:
        msg = f"{100 * frac:.1f}% of pullback steps hit the critical-distance cap"
        run.flags.append(msg)
        warnings.warn(msg, GeoPressureWarning, stacklevel=3)
    return run


def pullinf_tree_pressure(f: MapSpec, z: complex, n: int, params: PullbackParams,
                          t_grid: Sequence[float], **opts) -> list:
    """Tree pressure with per-step weights (sup of |f'| on the pulled-back disk)^-t.

    Every sample carries the fraction of saturated steps in its flags.
    """
    run = annotate(_run(f, z, n, params, t_grid, **opts))
    return _samples(run, "pullback", {"n": n, "r": params.r, "kappa": params.kappa,
                                      "z": complex(z)})


def telescope_diagnostic(f: MapSpec, z: complex, n: int, params: PullbackParams,
                         **opts) -> np.ndarray:
    """Per branch, (1/n) log of the pullback weight product at t = 1 over the
    pointwise one; nonpositive by construction."""
    run = _run(f, z, n, params, [1.0], record=True, **opts)
    rec = run.records
    return (rec["log_plain"] - rec["log_weight"]) / n
