"""Sparse nonnegative matrices: primitivity, Perron roots, t-powers and the
root of t -> log lambda(M^t)."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import BracketError, GeoPressureWarning


class SparseNonnegMatrix:
    """Row-sparse nonnegative matrix; stored weights are the t = 1 entries."""

    def __init__(self, matrix, note: Optional[str] = None):
        csr = sp.csr_matrix(matrix, dtype=float)
        if csr.shape[0] != csr.shape[1] or csr.shape[0] < 1:
            raise ValueError("matrix must be square with dimension >= 1")
        csr.eliminate_zeros()
        csr.sort_indices()
        if csr.nnz and (np.min(csr.data) < 0 or not np.all(np.isfinite(csr.data))):
            raise ValueError("weights must be finite and nonnegative")
        self.csr = csr
        self.note = note

    @classmethod
    def from_rows(cls, dim: int, rows, note: Optional[str] = None) -> "SparseNonnegMatrix":
        """Build from per-row lists of (column, weight)."""
        r, c, w = [], [], []
        for i, row in enumerate(rows):
            for j, wt in row:
                r.append(i)
                c.append(j)
                w.append(wt)
        return cls(sp.coo_matrix((w, (r, c)), shape=(dim, dim)), note)

    @classmethod
    def from_triplets(cls, dim: int, triplets, note: Optional[str] = None) -> "SparseNonnegMatrix":
        r, c, w = zip(*triplets) if triplets else ((), (), ())
        return cls(sp.coo_matrix((w, (r, c)), shape=(dim, dim)), note)

    @property
    def dimension(self) -> int:
        return self.csr.shape[0]

    @property
    def nnz(self) -> int:
        return self.csr.nnz

    def rows(self):
        for i in range(self.dimension):
            lo, hi = self.csr.indptr[i], self.csr.indptr[i + 1]
            yield list(zip(self.csr.indices[lo:hi].tolist(), self.csr.data[lo:hi].tolist()))

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()

    def triplets(self):
        coo = self.csr.tocoo()
        return list(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))

    def dump(self, path) -> None:
        """Structured text: dimension on the first line, then 'i j weight' rows."""
        with open(path, "w") as fh:
            fh.write(f"{self.dimension}\n")
            for i, j, w in self.triplets():
                fh.write(f"{i} {j} {w!r}\n")

    @classmethod
    def load(cls, path) -> "SparseNonnegMatrix":
        with open(path) as fh:
            dim = int(fh.readline())
            trip = [(int(a), int(b), float(c)) for a, b, c in (ln.split() for ln in fh if ln.strip())]
        return cls.from_triplets(dim, trip)

    def __repr__(self):
        return f"SparseNonnegMatrix(dim={self.dimension}, nnz={self.nnz})"


def _as_matrix(M) -> SparseNonnegMatrix:
    return M if isinstance(M, SparseNonnegMatrix) else SparseNonnegMatrix(np.asarray(M, dtype=float))


@dataclass
class PerronResult:
    radius: float
    iterations: int
    residual: float
    converged: bool
    primitive: bool
    period: int
    irreducible: bool = True
    flags: list = field(default_factory=list)


def is_primitive(M) -> tuple:
    """(irreducible, period).  The period is the gcd of level(u) + 1 - level(v)
    over edges u -> v, with BFS levels from vertex 0."""
    M = _as_matrix(M)
    g = M.csr
    n = M.dimension
    if g.nnz == 0:
        return False, 0
    fwd = breadth_first_order(g, 0, directed=True, return_predecessors=False)
    bwd = breadth_first_order(g.T.tocsr(), 0, directed=True, return_predecessors=False)
    if len(fwd) < n or len(bwd) < n:
        return False, 0
    level = np.full(n, -1, dtype=np.int64)
    level[0] = 0
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in g.indices[g.indptr[u]:g.indptr[u + 1]]:
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(v)
        frontier = nxt
    coo = g.tocoo()
    diffs = np.abs(level[coo.row] + 1 - level[coo.col])
    period = int(np.gcd.reduce(diffs)) if diffs.size else 0
    return True, period


def _block_radius(B: sp.csr_matrix, tol: float, max_iter: int) -> tuple:
    """Perron root of an irreducible block B (already shifted by I).

    Returns (lo, hi, iterations): the Collatz-Wielandt bracket of the final
    iterate, which contains the root.
    """
    x = np.ones(B.shape[0])
    lo, hi = 0.0, math.inf
    it = 0
    for it in range(1, max_iter + 1):
        y = B @ x
        r = y / x
        lo, hi = float(r.min()), float(r.max())
        if hi - lo <= tol * max(hi - 1.0, 1e-300):
            break
        x = y / y.max()
    return lo, hi, it


def spectral_radius(M, tol: float = 1e-10, max_iter: int = 100000) -> PerronResult:
    """Perron root by power iteration on M + I from the all-ones vector.

    Each strongly connected block is iterated on its own and the largest
    block root is returned; the residual is the relative width of the
    Collatz-Wielandt bracket on that block.
    """
    M = _as_matrix(M)
    irreducible, period = is_primitive(M)
    A = M.csr
    if A.nnz == 0:
        return PerronResult(0.0, 0, 0.0, True, False, 0, False)
    ncomp, labels = connected_components(A, directed=True, connection="strong")
    best = (0.0, 0.0)
    total_it = 0
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(ncomp + 1))
    for comp in range(ncomp):
        idx = order[bounds[comp]:bounds[comp + 1]]
        block = A[idx][:, idx]
        if block.nnz == 0:
            continue
        if len(idx) == 1:
            cand = (float(block.data[0]), 0.0)
        else:
            B = block + sp.identity(len(idx), format="csr")
            lo, hi, it = _block_radius(B, tol, max_iter)
            total_it += it
            lam = 0.5 * (lo + hi) - 1.0
            cand = (lam, (hi - lo) / max(lam, 1e-300))
        if cand[0] > best[0]:
            best = cand
    lam, resid = best
    converged = resid <= tol
    res = PerronResult(float(lam), total_it, float(resid), converged,
                       irreducible and period == 1, period, irreducible)
    if not converged:
        res.flags.append(f"power iteration not converged after {total_it} iterations "
                         f"(residual {resid:.3e})")
    return res


def entrywise_power(M, t: float) -> SparseNonnegMatrix:
    """Positive weights w -> w**t; structural zeros stay zero."""
    M = _as_matrix(M)
    out = M.csr.copy()
    out.data = np.power(out.data, float(t))
    return SparseNonnegMatrix(out, M.note)


def log_perron(M, t: float, tol: float = 1e-12) -> float:
    res = spectral_radius(entrywise_power(M, t), tol=tol)
    return math.log(res.radius) if res.radius > 0 else -math.inf


@dataclass
class RootResult:
    t: float
    monotone: bool
    samples: list
    flags: list = field(default_factory=list)


def perron_root_in_t(M, bracket=(0.0, 2.0), tol_t: float = 1e-6, scan: int = 16,
                     full: bool = False):
    """Solve lambda(M^t) = 1 for t in the bracket with Brent's method.

    A 16-point scan first checks that log lambda is strictly decreasing; when
    it is not, the first sign change is used and the result is flagged.
    """
    M = _as_matrix(M)
    lo, hi = map(float, bracket)
    ts = np.linspace(lo, hi, scan)
    vals = [log_perron(M, t) for t in ts]
    if not (vals[0] > 0 > vals[-1]):
        raise BracketError(f"no sign change of log lambda on [{lo}, {hi}]",
                           values=(vals[0], vals[-1]))
    monotone = all(b < a for a, b in zip(vals, vals[1:]))
    k = next(i for i in range(scan - 1) if vals[i] > 0 >= vals[i + 1])
    a, b = ts[k], ts[k + 1]
    if vals[k + 1] == 0:
        root = b
    else:
        # safeguarded bisection (Brent) on the first sign-change cell
        root = brentq(lambda t: log_perron(M, t), a, b, xtol=min(tol_t, 1e-6) * 1e-4)
    flags = [] if monotone else ["log lambda(t) not monotone on the scan; first sign change used"]
    if flags:
        warnings.warn(flags[0], GeoPressureWarning, stacklevel=2)
    if full:
        return RootResult(root, monotone, list(zip(ts.tolist(), vals)), flags)
    return root


__all__ = [
    "SparseNonnegMatrix", "PerronResult", "RootResult", "is_primitive", "spectral_radius",
    "entrywise_power", "log_perron", "perron_root_in_t",
]
