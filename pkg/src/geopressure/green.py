"""Green's function of the basin of infinity and external rays for polynomials.

Rays are traced with Newton continuation in the potential: at potential ``p``
the point on the ray of angle ``theta`` solves ``f^m(z) = exp(d^m (p + 2 pi i
theta))`` for ``m`` large enough that the Böttcher map is the identity to
working precision there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import ConvergenceError
from .mapcore import MapSpec, derivative, evaluate

ESCAPE_RADIUS = 1e12
# potential at which the inverse Böttcher map is replaced by the identity
BOTTCHER_LEVEL = math.log(1e6)


def _leading(f: MapSpec) -> complex:
    return f.numerator[-1]


def _require_polynomial(f: MapSpec):
    if not f.is_polynomial:
        raise ValueError("Green's function and external rays need a polynomial map")


def green_potential(f: MapSpec, z, max_iter: int = 5000, radius: float = ESCAPE_RADIUS):
    """G(z) = lim d^-n log|f^n(z)|; 0 for points that do not escape within
    ``max_iter`` iterations.  Accepts scalars or complex arrays."""
    _require_polynomial(f)
    d = f.degree
    shift = math.log(abs(_leading(f))) / (d - 1)
    scalar = np.ndim(z) == 0
    w = np.atleast_1d(np.asarray(z, dtype=complex)).copy()
    out = np.zeros(w.shape)
    active = np.ones(w.shape, dtype=bool)
    logr = math.log(radius)
    scale = 1.0
    for _ in range(max_iter + 1):
        a = np.abs(w[active])
        with np.errstate(divide="ignore"):
            la = np.log(a)
        done = la > logr
        if np.any(done):
            idx = np.flatnonzero(active)[done]
            out[idx] = (la[done] + shift) * scale
            active[idx] = False
        if not np.any(active):
            break
        w[active] = evaluate(f, w[active])
        scale /= d
    return float(out[0]) if scalar else out


def _as_fraction(theta) -> Fraction:
    if isinstance(theta, Fraction):
        return theta % 1
    if isinstance(theta, str):
        return Fraction(theta) % 1
    return Fraction(theta).limit_denominator(1 << 40) % 1


def _bottcher_inverse(f: MapSpec, w: np.ndarray) -> np.ndarray:
    if f.kind == "unicritical":
        d = f.degree
        return w - f.c / (d * w ** (d - 1))
    lead = _leading(f)
    d = f.degree
    # monic-conjugate normalisation: phi(z) ~ lead^(1/(d-1)) z
    return w / lead ** (1.0 / (d - 1))


def _iterate_with_derivative(f: MapSpec, z: np.ndarray, m: int):
    w = z.copy()
    dw = np.ones_like(z)
    for _ in range(m):
        dw = dw * derivative(f, w)
        w = evaluate(f, w)
    return w, dw


def _level(d: int, p: float) -> int:
    if p >= BOTTCHER_LEVEL:
        return 0
    return int(math.ceil(math.log(BOTTCHER_LEVEL / p, d)))


def _newton_on_rays(f: MapSpec, z: np.ndarray, angles: Sequence[Fraction], p: float,
                    max_iter: int = 60) -> np.ndarray:
    d = f.degree
    m = _level(d, p)
    dm = d ** m
    frac = np.array([float((dm * a) % 1) for a in angles])
    target = np.exp(dm * p + 2j * np.pi * frac)
    target = _bottcher_inverse(f, target)
    x = z.copy()
    for _ in range(max_iter):
        w, dw = _iterate_with_derivative(f, x, m)
        step = (w - target) / dw
        x = x - step
        if np.all(np.abs(step) <= 1e-14 * (1 + np.abs(x))):
            return x
    w, dw = _iterate_with_derivative(f, x, m)
    resid = np.max(np.abs(w - target) / np.abs(target))
    if not np.isfinite(resid) or resid > 1e-8:
        raise ConvergenceError(f"ray Newton step diverged at potential {p:.3e}",
                               residual=resid, last=p)
    return x


def _schedule(top: float, targets: Sequence[float], steps_per_halving: int) -> list:
    """Decreasing potentials from ``top`` containing every target exactly."""
    lo = min(targets)
    ratio = 2.0 ** (-1.0 / steps_per_halving)
    sched = []
    p = top
    while p > lo:
        sched.append(p)
        p *= ratio
    sched.extend(targets)
    return sorted(set(sched), reverse=True)


def trace_rays(f: MapSpec, angles: Sequence, potentials: Sequence[float],
               steps_per_halving: int = 8) -> np.ndarray:
    """Points on several rays at several potentials.

    Returns an array of shape ``(len(potentials), len(angles))``.
    """
    _require_polynomial(f)
    angles = [_as_fraction(a) for a in angles]
    potentials = [float(p) for p in potentials]
    if min(potentials) <= 0:
        raise ValueError("potentials must be positive")
    top = max(BOTTCHER_LEVEL, max(potentials))
    sched = _schedule(top, potentials, steps_per_halving)
    frac = np.array([float(a) for a in angles])
    x = _bottcher_inverse(f, np.exp(top + 2j * np.pi * frac))
    wanted = {p: i for i, p in enumerate(potentials)}
    out = np.empty((len(potentials), len(angles)), dtype=complex)
    for p in sched:
        x = _newton_on_rays(f, x, angles, p)
        if p in wanted:
            out[wanted[p]] = x
    return out


@dataclass(frozen=True)
class ExternalRay:
    angle: Fraction
    potentials: np.ndarray
    points: np.ndarray


def trace_external_ray(f: MapSpec, theta, eta: float, eta_min: float,
                       steps_per_halving: int = 8) -> ExternalRay:
    """Polyline on the external ray of angle ``theta`` from potential ``eta``
    down to ``eta_min``."""
    if not 0 < eta_min < eta:
        raise ValueError("need 0 < eta_min < eta")
    angle = _as_fraction(theta)
    ratio = 2.0 ** (-1.0 / steps_per_halving)
    pots = [eta]
    while pots[-1] * ratio > eta_min:
        pots.append(pots[-1] * ratio)
    pots.append(eta_min)
    pts = trace_rays(f, [angle], pots, steps_per_halving)[:, 0]
    return ExternalRay(angle, np.array(pots), pts)


def external_angle(f: MapSpec, z: complex, steps_per_halving: int = 8) -> float:
    """External angle in [0, 1) of a point of the basin of infinity, found by
    following its ray upward until the Böttcher map is the identity."""
    _require_polynomial(f)
    d = f.degree
    p = green_potential(f, z)
    if p <= 0:
        raise ValueError("point does not escape; external angle undefined")
    x = np.array([complex(z)])
    ratio = 2.0 ** (1.0 / steps_per_halving)
    while p < BOTTCHER_LEVEL:
        m = _level(d, p)
        w, _ = _iterate_with_derivative(f, x, m)
        p_next = min(p * ratio, BOTTCHER_LEVEL)
        target = w * math.exp(d ** m * (p_next - p))
        for _ in range(60):
            w, dw = _iterate_with_derivative(f, x, m)
            step = (w - target) / dw
            x = x - step
            if np.all(np.abs(step) <= 1e-14 * (1 + np.abs(x))):
                break
        p = p_next
    w = complex(x[0])
    if f.kind == "unicritical":
        w = w * (1 + f.c / w ** d) ** (1.0 / d)
    else:
        w = w * _leading(f) ** (1.0 / (d - 1))
    return (math.atan2(w.imag, w.real) / (2 * math.pi)) % 1.0
