"""Compiled inner loops for the coefficient recursions.

One kernel per beta structure. All kernels share the same accumulation
discipline so that structurally equal specs produce bit-identical paths:
ascending-k sums starting from 0.0, X_t = mu + acc at the end, and the
single product p = g * z reused for both the path sum and the recursion
state. No fastmath: float operations must keep their written order.

Shared argument conventions:
  zeta     innovations, zeta[0] holding time index t0 = 1 - M (families
           without burn-in) or 1 - 2M (lagged, tv_arfima)
  fam      0 -> g = Q(alpha_k + inner); 1 -> g = alpha_k * Q(inner)
  out_x    length n, X_1..X_n
  out_g    (n, M+1) when retain, else (1, 1) scratch
Return value: 0 on success, else the 1-based time t of the first
non-finite path value.
"""

from __future__ import annotations

import numpy as np
from numba import literally, njit

__all__ = [
    "QCODE",
    "sim_ma",
    "sim_sumform",
    "sim_colgeo",
    "sim_col1",
    "sim_colsparse",
    "sim_csr",
    "sim_lagged_csr",
    "sim_tv_arfima",
]

QCODE = {"linear": 0, "relu": 1, "triangle": 2, "affine": 3, "step": 4,
         "indicator": 5}


@njit(cache=True, nogil=True, inline="always")
def _q(x, qcode, qp0, qp1, bp, vals):
    # qp0/qp1 are the scalar params hoisted out of the hot loops: slope for
    # linear, (intercept, slope) for affine, (a, b) for indicator
    if qcode == 0:
        return qp0 * x
    if qcode == 1:
        return x if x > 0.0 else 0.0
    if qcode == 2:
        if 0.0 <= x <= 1.0:
            return x
        if 1.0 < x <= 2.0:
            return 2.0 - x
        return 0.0
    if qcode == 3:
        return qp0 + qp1 * x
    if qcode == 4:
        if x < bp[0] or x > bp[bp.shape[0] - 1]:
            return 0.0
        if x == bp[bp.shape[0] - 1]:
            return vals[vals.shape[0] - 1]
        lo = 0
        hi = bp.shape[0] - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if x >= bp[mid]:
                lo = mid
            else:
                hi = mid
        return vals[lo]
    return 1.0 if qp0 <= x < qp1 else 0.0


@njit(cache=True, nogil=True, inline="always")
def _d(x, dcode, dp):
    if dcode == 0:
        return dp[0]
    return dp[0] + (dp[1] - dp[0]) / (1.0 + np.exp(-x / dp[2]))


@njit(cache=True, nogil=True)
def sim_ma(zeta, mu, b, n, M, retain, out_x, out_g):
    # beta Zero: deterministic coefficients, a plain truncated moving average
    for t in range(n):
        base = t + M
        acc = 0.0
        for k in range(M + 1):
            acc += b[k] * zeta[base - k]
        out_x[t] = mu + acc
        if retain:
            for k in range(M + 1):
                out_g[t, k] = b[k]
        if not np.isfinite(out_x[t]):
            return t + 1
    return 0


@njit(cache=True, nogil=True)
def sim_sumform(zeta, mu, alpha, wseq, fam, qcode, qp, bp, vals, n, M,
                retain, out_x, out_g):
    literally(fam)
    literally(qcode)
    qp0 = qp[0]
    qp1 = qp[qp.shape[0] - 1]
    # beta_{i,j} = wseq[i+j]: the inner sum is wseq[k] times a running prefix
    for t in range(n):
        base = t + M
        acc = 0.0
        p = 0.0
        for k in range(M + 1):
            inner = wseq[k] * p
            if fam == 0:
                g = _q(alpha[k] + inner, qcode, qp0, qp1, bp, vals)
            else:
                g = alpha[k] * _q(inner, qcode, qp0, qp1, bp, vals)
            pk = g * zeta[base - k]
            acc += pk
            p += pk
            if retain:
                out_g[t, k] = g
        out_x[t] = mu + acc
        if not np.isfinite(out_x[t]):
            return t + 1
    return 0


@njit(cache=True, nogil=True)
def sim_colgeo(zeta, mu, alpha, scale, ratio, fam, qcode, qp, bp, vals, n, M,
               retain, out_x, out_g):
    literally(fam)
    literally(qcode)
    qp0 = qp[0]
    qp1 = qp[qp.shape[0] - 1]
    # beta_{i,j} = scale * ratio^j: the inner sum rolls geometrically
    sr = scale * ratio
    for t in range(n):
        base = t + M
        acc = 0.0
        s = 0.0
        for k in range(M + 1):
            if fam == 0:
                g = _q(alpha[k] + s, qcode, qp0, qp1, bp, vals)
            else:
                g = alpha[k] * _q(s, qcode, qp0, qp1, bp, vals)
            pk = g * zeta[base - k]
            acc += pk
            s = ratio * s + sr * pk
            if retain:
                out_g[t, k] = g
        out_x[t] = mu + acc
        if not np.isfinite(out_x[t]):
            return t + 1
    return 0


@njit(cache=True, nogil=True)
def sim_col1(zeta, mu, alpha, v1, fam, qcode, qp, bp, vals, n, M, retain,
             out_x, out_g):
    # single column entry at lag 1: the inner sum is v1 times the previous
    # product, a scalar chain (hot path, kept free of array state)
    literally(fam)
    literally(qcode)
    qp0 = qp[0]
    qp1 = qp[qp.shape[0] - 1]
    for t in range(n):
        base = t + M
        acc = 0.0
        prev = 0.0
        for k in range(M + 1):
            inner = v1 * prev
            if fam == 0:
                g = _q(alpha[k] + inner, qcode, qp0, qp1, bp, vals)
            else:
                g = alpha[k] * _q(inner, qcode, qp0, qp1, bp, vals)
            pk = g * zeta[base - k]
            acc += pk
            prev = pk
            if retain:
                out_g[t, k] = g
        out_x[t] = mu + acc
        if not np.isfinite(out_x[t]):
            return t + 1
    return 0


@njit(cache=True, nogil=True)
def sim_colsparse(zeta, mu, alpha, js, vs, fam, qcode, qp, bp, vals, n, M,
                  retain, out_x, out_g):
    literally(fam)
    literally(qcode)
    qp0 = qp[0]
    qp1 = qp[qp.shape[0] - 1]
    # beta_{i,j} = vs[e] at j = js[e]: inner_k = sum_e vs[e] * (zg)_{k - js[e]}
    zg = np.empty(M + 1)
    ne = js.shape[0]
    for t in range(n):
        base = t + M
        acc = 0.0
        for k in range(M + 1):
            inner = 0.0
            for e in range(ne):
                j = js[e]
                if j <= k:
                    inner += vs[e] * zg[k - j]
            if fam == 0:
                g = _q(alpha[k] + inner, qcode, qp0, qp1, bp, vals)
            else:
                g = alpha[k] * _q(inner, qcode, qp0, qp1, bp, vals)
            pk = g * zeta[base - k]
            acc += pk
            zg[k] = pk
            if retain:
                out_g[t, k] = g
        out_x[t] = mu + acc
        if not np.isfinite(out_x[t]):
            return t + 1
    return 0


@njit(cache=True, nogil=True)
def sim_csr(zeta, mu, alpha, off, ei, ev, fam, qcode, qp, bp, vals, n, M,
            retain, out_x, out_g):
    literally(fam)
    literally(qcode)
    qp0 = qp[0]
    qp1 = qp[qp.shape[0] - 1]
    # general table grouped by diagonal: entries e in [off[k], off[k+1])
    # contribute ev[e] * (zg)_{ei[e]} to the inner sum at lag k
    zg = np.empty(M + 1)
    for t in range(n):
        base = t + M
        acc = 0.0
        for k in range(M + 1):
            inner = 0.0
            for e in range(off[k], off[k + 1]):
                inner += ev[e] * zg[ei[e]]
            if fam == 0:
                g = _q(alpha[k] + inner, qcode, qp0, qp1, bp, vals)
            else:
                g = alpha[k] * _q(inner, qcode, qp0, qp1, bp, vals)
            pk = g * zeta[base - k]
            acc += pk
            zg[k] = pk
            if retain:
                out_g[t, k] = g
        out_x[t] = mu + acc
        if not np.isfinite(out_x[t]):
            return t + 1
    return 0


@njit(cache=True, nogil=True)
def sim_lagged_csr(zeta, mu, alpha, off, ei, ev, qcode, qp, bp, vals, n, M,
                   retain, out_x, out_g):
    """Previous-slice recursion with an M-step warm-up before t = 1.

    The first warm-up slice takes the deterministic values Q(alpha_k); the
    CSR diagonals are indexed by k = i + j + 1 (inner sums read the
    previous slice one time step back). zeta[0] is time 1 - 2M.
    """
    literally(qcode)
    qp0 = qp[0]
    qp1 = qp[qp.shape[0] - 1]
    gprev = np.empty(M + 1)
    gcur = np.empty(M + 1)
    zgp = np.empty(M + 1)
    for k in range(M + 1):
        gprev[k] = _q(alpha[k], qcode, qp0, qp1, bp, vals)
    for step in range(M + n):
        t = step + 1 - M           # simulated time of this slice
        base = step + M            # zeta index of time t
        for i in range(M + 1):
            zgp[i] = zeta[base - 1 - i] * gprev[i]
        acc = 0.0
        for k in range(M + 1):
            inner = 0.0
            if k >= 2:
                for e in range(off[k], off[k + 1]):
                    inner += ev[e] * zgp[ei[e]]
            g = _q(alpha[k] + inner, qcode, qp0, qp1, bp, vals)
            gcur[k] = g
            acc += g * zeta[base - k]
        for k in range(M + 1):
            gprev[k] = gcur[k]
        if t >= 1:
            out_x[t - 1] = mu + acc
            if retain:
                for k in range(M + 1):
                    out_g[t - 1, k] = gcur[k]
            if not np.isfinite(out_x[t - 1]):
                return t
    return 0


@njit(cache=True, nogil=True)
def sim_tv_arfima(zeta, mu, dcode, dp, n, M, retain, out_x, out_g):
    """Product-form coefficients with state-dependent memory intensity.

    g_{t,t} = 1 and g_{t-k,t} is a fresh ascending product over m = 1..k of
    (d(x_m) + m - 1)/m, where x_m is the retained partial projection of the
    slice at time t - m evaluated at s = t - k (zero for m = k, clamped to
    the truncated window otherwise). Partial projections P_v(s) =
    sum_{s<u<=v} zeta_u g_{u,v} are kept for the last M slices in a ring
    buffer, built back-to-front after each slice. M-step warm-up with
    zero-initialized projections; zeta[0] is time 1 - 2M.
    """
    literally(dcode)
    g = np.empty(M + 1)
    if M == 0:
        for t in range(n):
            out_x[t] = mu + zeta[t]
            if retain:
                out_g[t, 0] = 1.0
            if not np.isfinite(out_x[t]):
                return t + 1
        return 0
    P = np.zeros((M, M + 2))       # slot v % M holds P for slice time v
    for step in range(M + n):
        t = step + 1 - M
        base = step + M
        g[0] = 1.0
        for k in range(1, M + 1):
            val = 1.0
            for m in range(1, k + 1):
                if m == k:
                    x = 0.0
                else:
                    x = P[(t - m) % M, m + M + 1 - k]
                val = val * (_d(x, dcode, dp) + m - 1.0) / m
            g[k] = val
        acc = 0.0
        for k in range(M + 1):
            acc += g[k] * zeta[base - k]
        slot = t % M
        P[slot, M + 1] = 0.0
        run = 0.0
        for k in range(M + 1):
            run += zeta[base - k] * g[k]
            P[slot, M - k] = run
        if t >= 1:
            out_x[t - 1] = mu + acc
            if retain:
                for k in range(M + 1):
                    out_g[t - 1, k] = g[k]
            if not np.isfinite(out_x[t - 1]):
                return t
    return 0
