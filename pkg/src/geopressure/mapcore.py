"""Polynomial and rational maps of the plane: evaluation, derivative moduli,
critical data and preimages.

Points are plain Python ``complex`` numbers (or complex numpy arrays where a
function says so).  Coefficient lists are ascending: ``(a_0, a_1, ..., a_d)``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConvergenceError, PoleError

EUCLIDEAN = "euclidean"
SPHERICAL = "spherical"
METRICS = (EUCLIDEAN, SPHERICAL)

# roots closer than this (relative) are treated as one multiple root
CLUSTER_TOL = 1e-6


def _trim(coeffs: np.ndarray, rel: float = 1e-14) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=complex)
    scale = np.max(np.abs(coeffs)) if coeffs.size else 0.0
    end = coeffs.size
    while end > 1 and abs(coeffs[end - 1]) <= rel * scale:
        end -= 1
    return coeffs[:end]


def horner(coeffs, z):
    """Value and first derivative of an ascending-coefficient polynomial."""
    p = np.zeros_like(z, dtype=complex) if isinstance(z, np.ndarray) else 0j
    dp = np.zeros_like(p) if isinstance(z, np.ndarray) else 0j
    for a in coeffs[::-1]:
        dp = dp * z + p
        p = p * z + a
    return p, dp


def polyder(coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=complex)
    if coeffs.size <= 1:
        return np.zeros(1, dtype=complex)
    return coeffs[1:] * np.arange(1, coeffs.size)


def polymul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.convolve(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def polysub(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = max(len(a), len(b))
    out = np.zeros(n, dtype=complex)
    out[: len(a)] += a
    out[: len(b)] -= b
    return out


@dataclass(frozen=True)
class MapSpec:
    """A unicritical polynomial ``z**d + c``, a general polynomial, or a
    rational map ``P/Q``.

    Use the :meth:`unicritical`, :meth:`polynomial` and :meth:`rational`
    constructors rather than the raw fields.
    """

    kind: str
    degree: int
    c: complex = 0j
    numerator: tuple = ()
    denominator: tuple = (1 + 0j,)
    _num: np.ndarray = field(default=None, repr=False, compare=False)
    _den: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        num = np.asarray(self.numerator, dtype=complex)
        den = np.asarray(self.denominator, dtype=complex)
        object.__setattr__(self, "_num", num)
        object.__setattr__(self, "_den", den)

    # constructors -------------------------------------------------------
    @classmethod
    def unicritical(cls, degree: int, c: complex) -> "MapSpec":
        if int(degree) != degree or degree < 2:
            raise ValueError("degree must be an integer >= 2")
        degree = int(degree)
        c = complex(c)
        num = [0j] * (degree + 1)
        num[0] = c
        num[degree] = 1 + 0j
        return cls("unicritical", degree, c, tuple(num), (1 + 0j,))

    @classmethod
    def polynomial(cls, coeffs: Sequence[complex]) -> "MapSpec":
        num = _trim(np.asarray(coeffs, dtype=complex), rel=0.0)
        if num.size < 3 or num[-1] == 0:
            raise ValueError("polynomial needs degree >= 2 and a nonzero leading coefficient")
        return cls("polynomial", num.size - 1, 0j, tuple(complex(a) for a in num), (1 + 0j,))

    @classmethod
    def rational(cls, num: Sequence[complex], den: Sequence[complex]) -> "MapSpec":
        p = _trim(np.asarray(num, dtype=complex), rel=0.0)
        q = _trim(np.asarray(den, dtype=complex), rel=0.0)
        if p[-1] == 0 or q[-1] == 0:
            raise ValueError("leading coefficients must be nonzero")
        degree = max(p.size, q.size) - 1
        if degree < 2:
            raise ValueError("rational map must have degree >= 2")
        if q.size > 1:
            qroots = np.roots(q[::-1])
            scale = np.max(np.abs(p)) * (1 + np.max(np.abs(qroots))) ** (p.size - 1)
            vals = np.abs(horner(p, qroots.astype(complex))[0])
            if np.min(vals) <= 1e-10 * scale:
                raise ValueError("numerator and denominator share a common root")
        return cls("rational", degree, 0j, tuple(complex(a) for a in p), tuple(complex(a) for a in q))

    # helpers ------------------------------------------------------------
    @property
    def is_polynomial(self) -> bool:
        return self.kind in ("unicritical", "polynomial")

    @property
    def default_metric(self) -> str:
        return EUCLIDEAN if self.is_polynomial else SPHERICAL

    def to_dict(self) -> dict:
        if self.kind == "unicritical":
            return {"kind": "unicritical", "degree": self.degree, "c": [self.c.real, self.c.imag]}
        out = {"kind": self.kind, "numerator": [[a.real, a.imag] for a in self.numerator]}
        if self.kind == "rational":
            out["denominator"] = [[a.real, a.imag] for a in self.denominator]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "MapSpec":
        def cx(v):
            if isinstance(v, (list, tuple)):
                return complex(float(v[0]), float(v[1]))
            return complex(v)

        kind = data.get("kind", "unicritical")
        if kind == "unicritical":
            return cls.unicritical(int(data.get("degree", 2)), cx(data.get("c", 0)))
        if kind == "polynomial":
            return cls.polynomial([cx(a) for a in data["numerator"]])
        if kind == "rational":
            return cls.rational([cx(a) for a in data["numerator"]],
                                [cx(a) for a in data["denominator"]])
        raise ValueError(f"unknown map kind {kind!r}")


def _check_pole(f: MapSpec, q):
    if np.any(q == 0):
        raise PoleError("evaluation at a pole of the rational map")


def evaluate(f: MapSpec, z):
    """f(z); accepts a complex scalar or a complex numpy array."""
    if f.kind == "unicritical":
        return z ** f.degree + f.c
    p, _ = horner(f._num, z)
    if f.kind == "polynomial":
        return p
    q, _ = horner(f._den, z)
    _check_pole(f, q)
    return p / q


def derivative(f: MapSpec, z):
    """Complex derivative f'(z)."""
    if f.kind == "unicritical":
        return f.degree * z ** (f.degree - 1)
    p, dp = horner(f._num, z)
    if f.kind == "polynomial":
        return dp
    q, dq = horner(f._den, z)
    _check_pole(f, q)
    return (dp * q - p * dq) / (q * q)


def derivative_modulus(f: MapSpec, z, metric: Optional[str] = None):
    """|f'(z)| in the euclidean or spherical metric."""
    metric = metric or f.default_metric
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    if metric == SPHERICAL and f.kind == "rational":
        # homogeneous form: no q**2, so stays finite next to a pole
        p, dp = horner(f._num, z)
        q, dq = horner(f._den, z)
        _check_pole(f, q)
        d = np.abs(dp * q - p * dq) * (1 + np.abs(z) ** 2) / (np.abs(p) ** 2 + np.abs(q) ** 2)
        return float(d) if np.ndim(d) == 0 else d
    d = np.abs(derivative(f, z))
    if metric == SPHERICAL:
        w = evaluate(f, z)
        d = d * (1 + np.abs(z) ** 2) / (1 + np.abs(w) ** 2)
    return float(d) if np.ndim(d) == 0 else d


# ---------------------------------------------------------------------------
# root finding

def _cauchy_radius(monic: np.ndarray) -> float:
    return 1.0 + float(np.max(np.abs(monic[:-1]))) if monic.size > 1 else 1.0


def aberth(coeffs, init: Optional[Iterable[complex]] = None, tol: float = 1e-15,
           maxiter: int = 800) -> np.ndarray:
    """All roots of an ascending-coefficient polynomial by Aberth-Ehrlich
    simultaneous iteration.  ``init`` warm-starts the iteration."""
    a = _trim(np.asarray(coeffs, dtype=complex), rel=0.0)
    n = a.size - 1
    if n < 1:
        return np.zeros(0, dtype=complex)
    a = a / a[-1]
    if n == 1:
        return np.array([-a[0]])
    if init is not None:
        x = np.array(list(init), dtype=complex)
        if x.size != n:
            x = None
    else:
        x = None
    if x is None:
        r = _cauchy_radius(a)
        x = r * np.exp(1j * (2 * np.pi * np.arange(n) / n + 0.4))
    else:
        # separate coincident starting points
        scale = 1 + np.max(np.abs(x))
        for i in range(n):
            for j in range(i):
                if abs(x[i] - x[j]) < 1e-7 * scale:
                    x[i] += 1e-4 * scale * cmath.exp(1j * (0.7 + i))
    eye = np.eye(n, dtype=bool)
    for it in range(maxiter):
        p, dp = horner(a, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(p == 0, 0, p / dp)
            diff = x[:, None] - x[None, :]
            diff[eye] = 1
            s = np.sum(1 / diff, axis=1) - 1  # remove the diagonal 1/1
            w = ratio / (1 - ratio * s)
        bad = ~np.isfinite(w)
        if np.any(bad):
            w[bad] = 1e-3 * (1 + np.abs(x[bad]))
        x = x - w
        if np.all(np.abs(w) <= tol * (1 + np.abs(x))):
            break
    return x


def _cluster(roots: np.ndarray, tol: float = CLUSTER_TOL) -> list:
    """Group numerically coincident roots; returns (representative, count)."""
    n = roots.size
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(roots[i] - roots[j]) <= tol * (1 + abs(roots[i])):
                parent[find(i)] = find(j)
    groups: dict = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(roots[i])
    return [(complex(np.mean(g)), len(g)) for g in groups.values()]


def _sorted(pairs):
    return sorted(pairs, key=lambda p: (p[0].real, p[0].imag))


def _polish(coeffs, root: complex, steps: int = 3) -> complex:
    for _ in range(steps):
        p, dp = horner(coeffs, root)
        if dp == 0 or p == 0:
            break
        step = p / dp
        if not cmath.isfinite(step):
            break
        root = root - step
    return root


def roots_with_multiplicity(coeffs, init=None) -> list:
    a = _trim(np.asarray(coeffs, dtype=complex))
    x = aberth(a, init=init)
    pairs = _cluster(x)
    out = []
    for r, m in pairs:
        out.append((complex(_polish(a, r) if m == 1 else r), m))
    return _sorted(out)


def critical_points(f: MapSpec) -> list:
    """Finite critical points as ``[(location, multiplicity), ...]`` sorted by
    (re, im).  The multiplicity is the local degree at the point."""
    if f.kind == "unicritical":
        return [(0j, f.degree)]
    if f.kind == "polynomial":
        dnum = polyder(f._num)
    else:
        dnum = polysub(polymul(polyder(f._num), f._den), polymul(f._num, polyder(f._den)))
    dnum = _trim(dnum, rel=1e-13)
    if dnum.size <= 1:
        return []
    pairs = roots_with_multiplicity(dnum)
    pairs = [(r, m + 1) for r, m in pairs]
    scale = np.max(np.abs(dnum))
    for r, _ in pairs:
        res = abs(horner(dnum, r)[0])
        if res > 1e-6 * scale * (1 + abs(r)) ** (dnum.size - 1):
            raise ConvergenceError("critical point solver did not converge", residual=res)
    return pairs


def preimages(f: MapSpec, z: complex, init: Optional[Iterable[complex]] = None) -> list:
    """Solutions of f(w) = z as ``[(w, multiplicity), ...]`` sorted by (re, im).

    Unicritical maps use closed-form d-th roots; other kinds solve
    P(w) - z Q(w) = 0 by Aberth iteration, optionally warm-started.
    """
    z = complex(z)
    d = f.degree
    if f.kind == "unicritical":
        r = z - f.c
        if r == 0:
            return [(0j, d)]
        w0 = cmath.exp(cmath.log(r) / d)
        rot = [cmath.exp(2j * math.pi * k / d) for k in range(d)]
        return _sorted([(w0 * u, 1) for u in rot])
    coeffs = polysub(f._num, z * f._den)
    coeffs = _trim(coeffs, rel=1e-15)
    pairs = roots_with_multiplicity(coeffs, init=init)
    worst = 0.0
    for w, _ in pairs:
        res = abs(evaluate(f, w) - z)
        worst = max(worst, res)
    if worst > 1e-10 * (1 + abs(z)):
        # one cold restart before giving up
        pairs = roots_with_multiplicity(coeffs)
        worst = max(abs(evaluate(f, w) - z) for w, _ in pairs)
        if worst > 1e-10 * (1 + abs(z)):
            raise ConvergenceError(f"preimage solver failed, max residual {worst:.3e}",
                                   residual=worst)
    return pairs


def distance_to_critical_set(f: MapSpec, z, crit: Optional[list] = None):
    """Euclidean distance from z to the nearest finite critical point."""
    if crit is None:
        crit = critical_points(f)
    if not crit:
        return math.inf if np.ndim(z) == 0 else np.full(np.shape(z), np.inf)
    pts = np.array([c for c, _ in crit])
    if np.ndim(z) == 0:
        return float(np.min(np.abs(complex(z) - pts)))
    z = np.asarray(z)
    return np.min(np.abs(z[..., None] - pts), axis=-1)
