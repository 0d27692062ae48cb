# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled depth-first backward-tree kernel for unicritical maps z**d + c.

Each call walks one subtree (fixed by the base-d digits of ``prefix_index`` on
the first ``prefix_depth`` levels) and returns a streaming log-sum-exp state
for every exponent in ``ts``.  The pure-numpy twin lives in ``_pytree.py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, exp, atan2, cos, sin, pow, hypot, INFINITY, M_PI
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    PLAIN = 0
    FUZZY = 1
    RESTRICTED = 2
    MSAMPLE = 3
    PULLBACK = 4


cdef inline double _log_upper(double absw, double r, int d, double logd) nogil:
    # log of sup |f'| on the closed disk B(w, r): d (|w| + r)^(d-1)
    return logd + (d - 1) * log(absw + r)


def tree_lse(double complex z, double complex c, int d, int n, int mode,
             double delta, double Delta, int m, double theta0,
             double r0, double kappa, double[::1] ts,
             int prefix_depth=0, long long prefix_index=0, bint record=False):
    cdef int nt = ts.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] mx_arr = np.full(nt, -np.inf)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sm_arr = np.zeros(nt)
    cdef double[::1] mx = mx_arr
    cdef double[::1] sm = sm_arr
    cdef long long leaves = 0, pruned = 0, collapses = 0, sat_steps = 0, underflow = 0
    cdef long long cap = 0
    cdef int k, j, ti, dig
    cdef double logd = log(<double>d)
    cdef double two_pi = 2.0 * M_PI
    cdef double rr, ang, wr, wi, aw, x, lstep, lwstep, best, sr, si, rho, capr, dv
    cdef long long sub, p, mult

    # per-depth stacks
    cdef double *pre_r = <double *> malloc((n + 1) * d * sizeof(double))
    cdef double *pre_i = <double *> malloc((n + 1) * d * sizeof(double))
    cdef double *lp = <double *> malloc((n + 1) * sizeof(double))
    cdef double *lw = <double *> malloc((n + 1) * sizeof(double))
    cdef double *rh = <double *> malloc((n + 1) * sizeof(double))
    cdef long long *st = <long long *> malloc((n + 1) * sizeof(long long))
    cdef int *child = <int *> malloc((n + 1) * sizeof(int))
    cdef int *hi = <int *> malloc((n + 1) * sizeof(int))
    cdef double *zr = <double *> malloc((n + 1) * sizeof(double))
    cdef double *zi = <double *> malloc((n + 1) * sizeof(double))
    cdef int *digits = <int *> malloc((prefix_depth + 1) * sizeof(int))

    cdef cnp.ndarray[cnp.float64_t, ndim=1] rec_re, rec_im, rec_lp, rec_lw
    cdef cnp.ndarray[cnp.int64_t, ndim=1] rec_sat
    cdef double[::1] vre, vim, vlp, vlw
    cdef long long[::1] vsat
    if record:
        cap = 1
        for k in range(n - prefix_depth):
            cap *= d
        rec_re = np.empty(cap); rec_im = np.empty(cap)
        rec_lp = np.empty(cap); rec_lw = np.empty(cap)
        rec_sat = np.empty(cap, dtype=np.int64)
        vre = rec_re; vim = rec_im; vlp = rec_lp; vlw = rec_lw; vsat = rec_sat

    p = prefix_index
    for k in range(prefix_depth - 1, -1, -1):
        digits[k] = <int>(p % d)
        p //= d

    with nogil:
        zr[0] = z.real; zi[0] = z.imag
        lp[0] = 0.0; lw[0] = 0.0; rh[0] = r0; st[0] = 0
        k = 0
        child[0] = -1
        while k >= 0:
            if child[k] == -1:
                # expand node at depth k: its d preimages go to slot k+1
                x = zr[k] - c.real
                wi = zi[k] - c.imag
                rr = hypot(x, wi)
                if rr == 0.0:
                    collapses += 1
                    for j in range(d):
                        pre_r[(k + 1) * d + j] = 0.0
                        pre_i[(k + 1) * d + j] = 0.0
                else:
                    ang = atan2(wi, x)
                    wr = pow(rr, 1.0 / d)
                    for j in range(d):
                        pre_r[(k + 1) * d + j] = wr * cos((ang + two_pi * j) / d)
                        pre_i[(k + 1) * d + j] = wr * sin((ang + two_pi * j) / d)
                if k < prefix_depth:
                    child[k] = digits[k] - 1
                    hi[k] = digits[k] + 1
                else:
                    hi[k] = d
            child[k] += 1
            if child[k] >= hi[k]:
                k -= 1
                continue
            j = child[k]
            wr = pre_r[(k + 1) * d + j]
            wi = pre_i[(k + 1) * d + j]
            aw = hypot(wr, wi)
            if mode == RESTRICTED and aw <= Delta:
                # only the leaves below this task's prefix are counted
                sub = 1
                for ti in range(n - max(k + 1, prefix_depth)):
                    sub *= d
                pruned += sub
                continue
            if aw > 0.0:
                lstep = logd + (d - 1) * log(aw)
            else:
                lstep = -INFINITY
            rho = 0.0
            if mode == PLAIN:
                lwstep = lstep
            elif mode == FUZZY or mode == RESTRICTED:
                lwstep = _log_upper(aw, delta, d, logd)
            elif mode == MSAMPLE:
                best = 0.0
                for ti in range(m):
                    sr = wr + 0.5 * delta * cos(theta0 + two_pi * ti / m)
                    si = wi + 0.5 * delta * sin(theta0 + two_pi * ti / m)
                    x = hypot(sr, si)
                    if x > best:
                        best = x
                lwstep = logd + (d - 1) * log(best)
            else:
                dv = d * pow(aw, d - 1)
                if dv < 1e-12:
                    underflow += 1
                    rho = rh[k]
                else:
                    rho = kappa * rh[k] / dv
                capr = 0.5 * aw
                st[k + 1] = st[k]
                if rho > capr:
                    rho = capr
                    st[k + 1] = st[k] + 1
                lwstep = _log_upper(aw, rho, d, logd)
            lp[k + 1] = lp[k] + lstep
            lw[k + 1] = lw[k] + lwstep
            rh[k + 1] = rho
            if mode != PULLBACK:
                st[k + 1] = 0
            zr[k + 1] = wr
            zi[k + 1] = wi
            if k + 1 == n:
                # leaf: fold -t * lw into the running log-sum-exp per t.  Sibling
                # leaves share |w| and hence the weight unless the samples are
                # angle dependent, so without recording they fold in one go.
                mult = 1
                if not record and mode != MSAMPLE:
                    mult = hi[k] - child[k]
                    child[k] = hi[k]
                for ti in range(nt):
                    if ts[ti] == 0.0:
                        x = 0.0
                    else:
                        x = -ts[ti] * lw[n]
                    if x > mx[ti]:
                        sm[ti] = sm[ti] * exp(mx[ti] - x) + mult
                        mx[ti] = x
                    elif x > -INFINITY:
                        sm[ti] += mult * exp(x - mx[ti])
                if record:
                    vre[leaves] = wr; vim[leaves] = wi
                    vlp[leaves] = lp[n]; vlw[leaves] = lw[n]
                    vsat[leaves] = st[n]
                leaves += mult
                sat_steps += mult * st[n]
            else:
                k += 1
                child[k] = -1

    free(pre_r); free(pre_i); free(lp); free(lw); free(rh); free(st)
    free(child); free(hi); free(zr); free(zi); free(digits)
    out = {
        "max": mx_arr, "sum": sm_arr, "leaves": leaves, "pruned": pruned,
        "collapses": collapses, "saturated_steps": sat_steps, "underflow": underflow,
    }
    if record:
        out["endpoints"] = rec_re[:leaves] + 1j * rec_im[:leaves]
        out["log_plain"] = rec_lp[:leaves]
        out["log_weight"] = rec_lw[:leaves]
        out["saturated"] = rec_sat[:leaves]
    return out
