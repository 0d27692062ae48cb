"""Yoccoz-style puzzles for unicritical polynomials and McMullen matrices.

Pieces are coded by arcs of external angles.  Depth-0 arcs are cut by a
forward-invariant angle set A; depth-N arcs are cut by the N-th preimages of A,
so multiplication by d maps every depth-(N+1) arc onto a depth-N arc.  The
geometry of a piece is read off an equipotential grid: level L holds the points
of potential eta/d^L at the angles k/(M0 d^L), and level L+1 is obtained from
level L by exact d-th roots with branches chosen by continuity.  Every grid
point therefore carries its external angle exactly, and membership in a piece
is a statement about angles.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import (
    BranchAmbiguityError,
    BudgetError,
    GeoPressureWarning,
    MarkovError,
)
from .green import _as_fraction, external_angle, green_potential, trace_rays
from .mapcore import MapSpec
from .pullback import DiskEnclosure
from .spectral import SparseNonnegMatrix

MODES = ("plain", "fuzzy", "restricted", "restricted-fuzzy", "double-sample", "multiple")
EMPTY_SENTINEL = "no admissible pieces at this depth"
GRID_BUDGET = 1 << 24
EXTRA_LEVELS = 2          # sample levels below the piece's own equipotential
DISK_INFLATION = 1.2
GAP_INFLATION = 1.2


def _require_unicritical(f: MapSpec):
    if f.kind != "unicritical":
        raise ValueError("puzzles are implemented for unicritical maps z^d + c")


def default_angles(d: int) -> list:
    """The angles k/d, all mapped to the fixed angle 0."""
    return [Fraction(k, d) for k in range(d)]


def _check_angles(d: int, angles) -> list:
    A = sorted({_as_fraction(a) for a in angles})
    if not A:
        raise ValueError("angle set must be nonempty")
    for a in A:
        if (d * a) % 1 not in A:
            raise ValueError(f"angle set is not forward-closed under multiplication by {d}: "
                             f"{a} -> {(d * a) % 1}")
    return A


# ---------------------------------------------------------------------------
# equipotential grid

class EquipotentialGrid:
    """Points of the equipotentials eta/d^L at uniformly spaced angles."""

    def __init__(self, f: MapSpec, eta: float, m0: int, budget: int = GRID_BUDGET):
        _require_unicritical(f)
        self.f = f
        self.eta = float(eta)
        self.m0 = int(m0)
        self.budget = budget
        self.levels: list = []
        self._anchor_cache: dict = {}
        pts = trace_rays(f, [Fraction(k, self.m0) for k in range(self.m0)], [self.eta])[0]
        self.levels.append(pts)

    @classmethod
    def from_levels(cls, f: MapSpec, eta: float, m0: int, levels: list, anchors: dict,
                    budget: int = GRID_BUDGET) -> "EquipotentialGrid":
        """Rebuild a grid from stored levels without tracing rays again."""
        grid = cls.__new__(cls)
        grid.f, grid.eta, grid.m0, grid.budget = f, float(eta), int(m0), budget
        grid.levels = [np.asarray(a, dtype=complex) for a in levels]
        grid._anchor_cache = {int(k): complex(v) for k, v in anchors.items()}
        return grid

    @property
    def degree(self) -> int:
        return self.f.degree

    def size(self, L: int) -> int:
        return self.m0 * self.degree ** L

    def potential(self, L: int) -> float:
        return self.eta / self.degree ** L

    def _anchor(self, L: int) -> complex:
        if L not in self._anchor_cache:
            want = [self.potential(k) for k in range(1, L + 1)]
            pts = trace_rays(self.f, [0], want)[:, 0]
            for k, p in enumerate(pts, start=1):
                self._anchor_cache[k] = complex(p)
        return self._anchor_cache[L]

    def ensure(self, L: int) -> None:
        if self.size(L) > self.budget:
            raise BudgetError(f"grid level {L} needs {self.size(L)} points, budget {self.budget}")
        while len(self.levels) <= L:
            self.levels.append(self._lift(len(self.levels)))

    def _lift(self, L: int) -> np.ndarray:
        """Level L from level L-1 by continuous choice of d-th roots."""
        d = self.degree
        prev = self.levels[L - 1]
        src = np.tile(prev, d) - self.f.c
        base = np.abs(src) ** (1.0 / d) * np.exp(1j * np.angle(src) / d)
        step = np.angle(base[1:] / base[:-1])
        dj = np.rint(-d * step / (2 * np.pi)).astype(np.int64)
        j = np.concatenate([[0], np.cumsum(dj)]) % d
        w = base * np.exp(2j * np.pi * j / d)
        # fix the global branch with the traced fixed ray at angle 0
        anchor = self._anchor(L)
        rot = np.exp(2j * np.pi * np.arange(d) / d)
        k = int(np.argmin(np.abs(w[0] * rot - anchor)))
        resid = abs(np.angle(w[0] * rot[k] / anchor))
        if resid >= np.pi / (2 * d):
            raise BranchAmbiguityError(f"grid level {L}: anchor mismatch {resid:.3e} rad")
        w = w * rot[k]
        # the lifted curve must close up after one turn
        close = int(np.rint(-d * np.angle(base[0] / base[-1]) / (2 * np.pi)))
        if (j[-1] + close - j[0]) % d:
            raise BranchAmbiguityError(f"grid level {L}: lifted equipotential fails to close")
        return w

    def arc(self, L: int, lo: int, hi: int, lattice: int) -> np.ndarray:
        """Level-L points with angles in [lo/lattice, hi/lattice] (wrapping)."""
        self.ensure(L)
        M = self.size(L)
        scale = M // lattice
        idx = np.arange(lo * scale, hi * scale + 1) % M
        return self.levels[L][idx]

    def point(self, L: int, num: int, lattice: int) -> complex:
        self.ensure(L)
        M = self.size(L)
        if (num * M) % lattice:
            raise ValueError("angle not on the grid")
        return complex(self.levels[L][(num * M // lattice) % M])


# ---------------------------------------------------------------------------
# pieces and levels

@dataclass
class PuzzlePiece:
    depth: int
    lo: int                      # arc [lo, hi] / lattice, hi may exceed lattice
    hi: int
    lattice: int
    itinerary: tuple
    branch_tags: tuple
    y: complex
    samples: np.ndarray
    diam: float
    dist_to_crit: float
    disk: DiskEnclosure
    fuzzy_upper: float           # sup |f'| bound on the piece (sample-cloud method)
    disk_upper: float            # sup |f'| on the enclosing disk
    parent: Optional[int] = None

    @property
    def arc(self) -> tuple:
        return Fraction(self.lo, self.lattice), Fraction(self.hi, self.lattice)

    @property
    def word(self) -> tuple:
        return self.itinerary + tuple(f"b{t}" for t in self.branch_tags)

    def contains_angle(self, theta: float, tol: float = 1e-12) -> bool:
        x = (theta * self.lattice - self.lo) % self.lattice
        return x <= (self.hi - self.lo) + tol or x >= self.lattice - tol


@dataclass
class PuzzleLevel:
    f: MapSpec
    depth: int
    eta: float
    angles: tuple
    pieces: list
    transitions: list            # (i, j, s)
    grid: EquipotentialGrid = field(repr=False)
    flags: list = field(default_factory=list)

    @property
    def lattice(self) -> int:
        return self.pieces[0].lattice

    @property
    def max_diam(self) -> float:
        return max(p.diam for p in self.pieces)

    def s(self, i: int, j: int) -> int:
        for a, b, s in self.transitions:
            if a == i and b == j:
                return s
        return 0

    def piece_of_angle(self, theta: float) -> int:
        for k, p in enumerate(self.pieces):
            if p.contains_angle(theta, tol=0.0):
                return k
        raise ValueError("angle not covered")

    def contains(self, i: int, z: complex) -> bool:
        """Membership for points of the basin of infinity inside the depth
        equipotential: compares the external angle with the piece's arc."""
        g = green_potential(self.f, z)
        if not 0 < g <= self.eta / self.f.degree ** self.depth * (1 + 1e-9):
            return False
        return self.pieces[i].contains_angle(external_angle(self.f, z), tol=1e-9)


@dataclass(frozen=True)
class RestrictionSchedule:
    A: Callable = lambda N: float(N)

    def __call__(self, N: int) -> float:
        return float(self.A(N))

    def check(self, levels: Sequence[PuzzleLevel]) -> list:
        """Warn when A(N) * max diam does not decrease along the levels."""
        prods = [self(lv.depth) * lv.max_diam for lv in levels]
        bad = [(levels[k].depth, levels[k + 1].depth) for k in range(len(prods) - 1)
               if not prods[k + 1] < prods[k]]
        for a, b in bad:
            warnings.warn(f"A(N)*diam did not decrease from N={a} to N={b}", GeoPressureWarning,
                          stacklevel=2)
        return prods


def _cuts(A: list, d: int, N: int) -> tuple:
    q = math.lcm(*(a.denominator for a in A))
    lattice = q * d ** N
    nums = sorted({(int(a * q) + k * q) % lattice for a in A for k in range(d ** N)})
    return nums, lattice, q


def _arcs(A: list, d: int, N: int) -> tuple:
    nums, lattice, _ = _cuts(A, d, N)
    arcs = [(nums[k], nums[k + 1]) for k in range(len(nums) - 1)]
    arcs.append((nums[-1], nums[0] + lattice))
    arcs.sort()
    return arcs, lattice


def _find_arc(arcs: list, lattice: int, x: int, scale: int = 1) -> int:
    """Index of the arc containing the angle x / lattice, where the arcs are
    given on the coarser lattice / scale."""
    x %= lattice
    for k, (lo, hi) in enumerate(arcs):
        if lo * scale <= x < hi * scale or lo * scale <= x + lattice < hi * scale:
            return k
    raise ValueError("lattice point not covered by arcs")


def _m0(A: list, d: int) -> int:
    q = math.lcm(*(a.denominator for a in A))
    m = 2 * q
    while m < 64:
        m *= 2
    return m


def _gap(points: np.ndarray) -> float:
    return float(np.max(np.abs(np.diff(points)))) if points.size > 1 else 0.0


def _diameter(points: np.ndarray) -> float:
    # the farthest pair lies on the convex hull
    if points.size > 64:
        try:
            hull = ConvexHull(np.column_stack([points.real, points.imag]))
            points = points[hull.vertices]
        except QhullError:
            pass
    return float(np.max(np.abs(points[:, None] - points[None, :])))


def _geometry(f: MapSpec, grid: EquipotentialGrid, N: int, lo: int, hi: int, lattice: int):
    d = f.degree
    levels = [grid.arc(L, lo, hi, lattice) for L in range(N, N + EXTRA_LEVELS + 1)]
    cloud = np.concatenate(levels)
    gap = max(_gap(p) for p in levels)
    for a, b in zip(levels, levels[1:]):
        gap = max(gap, float(np.max(np.abs(b[::d] - a))))
    y = grid.point(N + 1, lo + hi, 2 * lattice)
    diam = _diameter(cloud)
    centre = complex(np.mean(cloud))
    radius = float(np.max(np.abs(cloud - centre))) * DISK_INFLATION
    absmax = float(np.max(np.abs(cloud)))
    upper = d * (absmax + 0.5 * gap * GAP_INFLATION) ** (d - 1)
    disk_upper = d * (abs(centre) + radius) ** (d - 1)
    return dict(y=y, samples=cloud, diam=diam, dist_to_crit=float(np.min(np.abs(cloud))),
                disk=DiskEnclosure(centre, max(radius, 1e-300), DISK_INFLATION),
                fuzzy_upper=upper, disk_upper=disk_upper)


def _itinerary(arcs0: list, q: int, d: int, N: int, lo: int, hi: int) -> tuple:
    # follow the arc midpoint (lo + hi) / (2 q d^N) forward N steps
    mid2, lat2 = lo + hi, 2 * q * d ** N
    out = []
    for k in range(N + 1):
        x = Fraction(mid2 * d ** k, lat2) % 1
        out.append(next(i for i, (a, b) in enumerate(arcs0)
                        if Fraction(a, q) <= x < Fraction(b, q) or Fraction(a, q) <= x + 1 < Fraction(b, q)))
    return tuple(out)


def _transitions(A: list, d: int, N: int) -> tuple:
    """(transitions, children) where children[(i, j)] lists the depth-(N+1)
    arcs inside arc i that map onto arc j, in angular order."""
    arcs, lattice = _arcs(A, d, N)
    sub, sublat = _arcs(A, d, N + 1)
    children: dict = {}
    for lo, hi in sub:
        i = _find_arc(arcs, sublat, lo, scale=d)
        j = _find_arc(arcs, lattice, lo)
        children.setdefault((i, j), []).append((lo, hi))
    trans = sorted((i, j, len(v)) for (i, j), v in children.items())
    return trans, children


def _make_level(f, grid, A, N, arcs_info, flags) -> PuzzleLevel:
    d = f.degree
    q = math.lcm(*(a.denominator for a in A))
    arcs0, _ = _arcs(A, d, 0)
    pieces = []
    for lo, hi, lattice, tags, parent, parent_upper in arcs_info:
        geo = _geometry(f, grid, N, lo, hi, lattice)
        if parent_upper is not None:
            geo["fuzzy_upper"] = min(geo["fuzzy_upper"], parent_upper)
        pieces.append(PuzzlePiece(N, lo, hi, lattice, _itinerary(arcs0, q, d, N, lo, hi),
                                  tags, parent=parent, **geo))
    trans, _ = _transitions(A, d, N)
    level = PuzzleLevel(f, N, grid.eta, tuple(A), pieces, trans, grid, flags)
    markov_check(level)
    return level


def build_base_puzzle(f: MapSpec, eta: float = 0.2, angles: Optional[Sequence] = None,
                      budget: int = GRID_BUDGET) -> PuzzleLevel:
    """Depth-0 puzzle: the region below potential eta cut by the rays in `angles`."""
    _require_unicritical(f)
    d = f.degree
    A = _check_angles(d, angles if angles is not None else default_angles(d))
    grid = EquipotentialGrid(f, eta, _m0(A, d), budget)
    arcs, lattice = _arcs(A, d, 0)
    info = [(lo, hi, lattice, (), None, None) for lo, hi in arcs]
    return _make_level(f, grid, A, 0, info, [])


def refine_puzzle(level: PuzzleLevel) -> PuzzleLevel:
    """Depth N+1: one child per (transition, branch), i.e. s(i,j) children for
    each transition i -> j, ordered by angle."""
    f = level.f
    d = f.degree
    A = list(level.angles)
    N = level.depth
    _, children = _transitions(A, d, N)
    _, sublat = _arcs(A, d, N + 1)
    info = []
    for (i, j), arcs in sorted(children.items()):
        parent = level.pieces[i]
        for k, (lo, hi) in enumerate(arcs):
            tag = parent.branch_tags + ((k,) if len(arcs) > 1 else ())
            info.append((lo, hi, sublat, tag, i, parent.fuzzy_upper))
    info.sort(key=lambda r: r[0])
    new = _make_level(f, level.grid, A, N + 1, info, list(level.flags))
    # child clouds should sit in the parent's enclosing disk
    outside = 0
    for p in new.pieces:
        disk = level.pieces[p.parent].disk
        outside += int(np.any(np.abs(p.samples - disk.center) > disk.radius))
    if outside:
        msg = f"depth {N + 1}: {outside} child cloud(s) leave the parent's enclosing disk"
        new.flags.append(msg)
        warnings.warn(msg, GeoPressureWarning, stacklevel=2)
    return new


def build_puzzle(f: MapSpec, depth: int, eta: float = 0.2, angles=None,
                 budget: int = GRID_BUDGET) -> list:
    """Levels 0..depth."""
    levels = [build_base_puzzle(f, eta, angles, budget)]
    for _ in range(depth):
        levels.append(refine_puzzle(levels[-1]))
    return levels


def markov_check(level: PuzzleLevel, rtol: float = 1e-3) -> None:
    """For every transition i -> j the image of the part of piece i over
    piece j must reproduce piece j's samples."""
    f = level.f
    d = f.degree
    N = level.depth
    A = list(level.angles)
    _, children = _transitions(A, d, N)
    for (i, j), arcs in children.items():
        pj = level.pieces[j]
        target = level.grid.arc(N, pj.lo, pj.hi, pj.lattice)
        for lo, hi in arcs:
            src = level.grid.arc(N + 1, lo, hi, pj.lattice * d)
            img = src ** d + f.c
            err = float(np.max(np.abs(img - target)))
            if err > rtol * max(pj.diam, 1e-300):
                raise MarkovError(f"depth {N}: image of piece {i} misses piece {j} "
                                  f"(error {err:.3e}, diam {pj.diam:.3e})")


# ---------------------------------------------------------------------------
# matrices

def _sample_pair(y: complex, sep: float, orientation: float) -> tuple:
    off = 0.5 * sep * complex(math.cos(orientation), math.sin(orientation))
    return y - off, y + off


def assemble_matrix(level: PuzzleLevel, mode: str = "plain",
                    schedule: Optional[RestrictionSchedule] = None, seed: int = 0,
                    fuzzy_method: str = "cloud", in_piece: bool = False) -> SparseNonnegMatrix:
    """Weighted transition matrix at t = 1.

    fuzzy_method "cloud" bounds sup |f'| on a piece from its sample cloud (max
    modulus plus half the largest sample gap); "disk" uses the closed-form
    supremum on the inflated enclosing disk.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    if fuzzy_method not in ("cloud", "disk"):
        raise ValueError("fuzzy_method must be 'cloud' or 'disk'")
    schedule = schedule or RestrictionSchedule()
    f = level.f
    d = f.degree
    N = level.depth
    AN = schedule(N)
    orientation = 0.0 if seed == 0 else float(np.random.default_rng(seed).uniform(0, 2 * math.pi))

    def dmod(z):
        return d * abs(z) ** (d - 1)

    weights = []
    keep = []
    for p in level.pieces:
        if mode in ("fuzzy", "restricted-fuzzy"):
            w = 1.0 / (p.fuzzy_upper if fuzzy_method == "cloud" else p.disk_upper)
        elif mode == "double-sample" and (in_piece or p.dist_to_crit <= AN * p.diam):
            sep = 0.5 * p.diam if in_piece else AN * p.diam
            v1, v2 = _sample_pair(p.y, sep, orientation)
            w = min(1.0 / dmod(v1), 1.0 / dmod(v2))
        else:
            w = 1.0 / dmod(p.y)
        weights.append(w)
        if mode in ("restricted", "restricted-fuzzy"):
            keep.append(p.dist_to_crit / p.diam >= AN)
        else:
            keep.append(True)
    trip = []
    for i, j, s in level.transitions:
        if not keep[i]:
            continue
        trip.append((i, j, weights[i] * (s if mode == "multiple" else 1)))
    note = None
    if not trip:
        note = EMPTY_SENTINEL
        warnings.warn(f"depth {N}: {EMPTY_SENTINEL}", GeoPressureWarning, stacklevel=2)
    return SparseNonnegMatrix.from_triplets(len(level.pieces), trip, note)
