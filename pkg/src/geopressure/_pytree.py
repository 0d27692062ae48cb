"""Numpy fallback for the compiled backward-tree kernel.

Same signature and return payload as ``_ctree.tree_lse``; the tree is expanded
breadth-first one level at a time, so leaves come out in the same
(lexicographic branch) order as the compiled depth-first walk.
"""
import numpy as np

PLAIN, FUZZY, RESTRICTED, MSAMPLE, PULLBACK = range(5)
CHUNK = 1 << 16   # leaves per log-sum-exp block


def _children(z, c, d):
    r = z - c
    rr = np.abs(r)
    ang = np.angle(r)
    wr = rr ** (1.0 / d)
    j = np.arange(d)
    w = wr[:, None] * np.exp(1j * ((ang[:, None] + 2 * np.pi * j[None, :]) / d))
    w[rr == 0] = 0
    return w, int(np.count_nonzero(rr == 0))


def tree_lse(z, c, d, n, mode, delta, Delta, m, theta0, r0, kappa, ts,
             prefix_depth=0, prefix_index=0, record=False):
    ts = np.asarray(ts, dtype=float)
    logd = np.log(d)
    digits = []
    p = int(prefix_index)
    for _ in range(prefix_depth):
        digits.append(p % d)
        p //= d
    digits.reverse()

    pts = np.array([complex(z)])
    lp = np.zeros(1)
    lw = np.zeros(1)
    rho = np.array([float(r0)])
    st = np.zeros(1, dtype=np.int64)
    pruned = collapses = underflow = 0
    for k in range(n):
        w, col = _children(pts, complex(c), d)
        collapses += col
        if k < prefix_depth:
            sel = [digits[k]]
            w = w[:, sel]
        width = w.shape[1]
        w = w.reshape(-1)
        rep = lambda a: np.repeat(a, width)
        plp, plw, prho, pst = rep(lp), rep(lw), rep(rho), rep(st)
        aw = np.abs(w)
        if mode == RESTRICTED:
            keep = aw > Delta
            # only the leaves below this task's prefix are counted
            pruned += int(np.count_nonzero(~keep)) * d ** (n - max(k + 1, prefix_depth))
            w, aw, plp, plw, prho, pst = w[keep], aw[keep], plp[keep], plw[keep], prho[keep], pst[keep]
        with np.errstate(divide="ignore"):
            lstep = logd + (d - 1) * np.log(aw)
        new_rho = np.zeros_like(aw)
        new_st = np.zeros_like(pst)
        if mode == PLAIN:
            lwstep = lstep
        elif mode in (FUZZY, RESTRICTED):
            lwstep = logd + (d - 1) * np.log(aw + delta)
        elif mode == MSAMPLE:
            offs = 0.5 * delta * np.exp(1j * (theta0 + 2 * np.pi * np.arange(m) / m))
            best = np.max(np.abs(w[:, None] + offs[None, :]), axis=1)
            lwstep = logd + (d - 1) * np.log(best)
        else:
            dv = d * aw ** (d - 1)
            small = dv < 1e-12
            underflow += int(np.count_nonzero(small))
            with np.errstate(divide="ignore", invalid="ignore"):
                new_rho = np.where(small, prho, kappa * prho / dv)
            capr = 0.5 * aw
            sat = new_rho > capr
            new_rho = np.where(sat, capr, new_rho)
            new_st = pst + sat
            lwstep = logd + (d - 1) * np.log(aw + new_rho)
        pts, lp, lw, rho, st = w, plp + lstep, plw + lwstep, new_rho, new_st

    nt = ts.size
    mx = np.full(nt, -np.inf)
    sm = np.zeros(nt)
    zero_t = ts == 0
    for start in range(0, pts.size, CHUNK):
        x = -ts[:, None] * lw[None, start:start + CHUNK]
        x[zero_t, :] = 0.0
        cm = np.max(x, axis=1)
        with np.errstate(invalid="ignore"):
            cs = np.sum(np.exp(x - cm[:, None]), axis=1)
        new = np.maximum(mx, cm)
        with np.errstate(invalid="ignore"):
            sm = np.where(np.isfinite(mx), sm * np.exp(mx - new), 0.0) + \
                np.where(np.isfinite(cm), cs * np.exp(cm - new), 0.0)
        mx = new
    out = {
        "max": mx, "sum": sm, "leaves": int(pts.size), "pruned": int(pruned),
        "collapses": int(collapses), "saturated_steps": int(np.sum(st)),
        "underflow": int(underflow),
    }
    if record:
        out["endpoints"] = pts
        out["log_plain"] = lp
        out["log_weight"] = lw
        out["saturated"] = st
    return out
