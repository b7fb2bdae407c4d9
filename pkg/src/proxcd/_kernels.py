"""Hot numeric kernels, compiled with numba when available.

Every kernel exists in two interchangeable flavours:

* ``*_py``   -- pure-numpy reference implementation, always importable;
* compiled  -- the same loop nest under ``numba.njit(cache=True)``.

At import time the public names (``csr_matvec``, ``csr_rmatvec``,
``cdm_batch``, ``acdm_batch``) are bound to the compiled flavour unless the
environment variable ``PROXCD_DISABLE_NUMBA`` is set (``1``/``true``/``yes``)
or numba is not importable, in which case the numpy flavour is used.
``benchmarks/kernel_bench.py`` times both paths on the same workload.

The two flavours agree to floating-point reordering noise; within one flavour
results are bit-reproducible for a fixed seed.
"""

import os

import numpy as np

__all__ = [
    "numba_enabled",
    "csr_matvec",
    "csr_rmatvec",
    "cdm_batch",
    "acdm_batch",
    "csr_matvec_py",
    "csr_rmatvec_py",
    "cdm_batch_py",
    "acdm_batch_py",
]

_FLAG = "PROXCD_DISABLE_NUMBA"


def _disabled_by_env() -> bool:
    return os.environ.get(_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


_NUMBA_OK = False
if not _disabled_by_env():
    try:
        from numba import njit as _njit

        _NUMBA_OK = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _NUMBA_OK = False


def numba_enabled() -> bool:
    """True when the compiled kernel path is active."""
    return _NUMBA_OK


# ---------------------------------------------------------------------------
# sparse matrix-vector products
#
# Entry arrays are in row-major (CSR) order: rows[k], cols[k], vals[k] for the
# k-th stored entry, rows nondecreasing.  Accumulating in entry order keeps
# the numpy (bincount) and loop flavours bit-identical.
# ---------------------------------------------------------------------------


def csr_matvec_py(rows, cols, vals, x, m):
    """y[j] = sum_i A[j,i] * x[i], accumulated in stored-entry order."""
    if vals.size == 0:
        return np.zeros(m)
    return np.bincount(rows, weights=vals * x[cols], minlength=m)


def _csr_matvec_loop(rows, cols, vals, x, m):
    out = np.zeros(m)
    for k in range(vals.size):
        out[rows[k]] += vals[k] * x[cols[k]]
    return out


def csr_rmatvec_py(rows, cols, vals, p, n):
    """y[i] = sum_j A[j,i] * p[j] (transpose product), entry order."""
    if vals.size == 0:
        return np.zeros(n)
    return np.bincount(cols, weights=vals * p[rows], minlength=n)


def _csr_rmatvec_loop(rows, cols, vals, p, n):
    out = np.zeros(n)
    for k in range(vals.size):
        out[cols[k]] += vals[k] * p[rows[k]]
    return out


# ---------------------------------------------------------------------------
# coordinate-descent batch kernel
#
# Runs len(idx) coordinate steps of
#     x[i] -= inv_denom[i] * (softmax-coordinate-gradient + b[i] + H*(x[i]-center[i]))
# over the column-major layout (cindptr/crows/cvals), maintaining the
# incremental exponent state (z, w, S, M).  A full refresh of (M, w, S) runs
# every `refresh_every` steps, and early whenever a touched z overflows the
# exp-normalize window or S underflows.
#
# Optionally tracks the squared distance to a reference point `ystar`
# incrementally and records the first step index at which it drops below
# `thresh2`.
#
# Returns (S, M, steps_since, d2, first_hit).
# ---------------------------------------------------------------------------


def _cdm_refresh(z, w, gamma):
    M = z.max()
    np.exp((z - M) / gamma, out=w)
    return M, float(w.sum())


def cdm_batch_py(
    cindptr,
    crows,
    cvals,
    x,
    z,
    w,
    b,
    center,
    H,
    inv_denom,
    gamma,
    S,
    M,
    steps_since,
    refresh_every,
    guard,
    idx,
    track,
    ystar,
    thresh2,
    d2,
    step_base,
    first_hit,
):
    for t in range(idx.size):
        i = idx[t]
        lo, hi = cindptr[i], cindptr[i + 1]
        rows_i = crows[lo:hi]
        vals_i = cvals[lo:hi]
        g = float(vals_i @ w[rows_i]) / S + b[i] + H * (x[i] - center[i])
        delta = -g * inv_denom[i]
        if track:
            e = x[i] - ystar[i]
            d2 += delta * (2.0 * e + delta)
        x[i] += delta
        z[rows_i] += delta * vals_i
        w_new = np.exp((z[rows_i] - M) / gamma)
        S += float(w_new.sum() - w[rows_i].sum())
        w[rows_i] = w_new
        steps_since += 1
        overflow = rows_i.size > 0 and float(np.max(z[rows_i])) - M > guard
        if steps_since >= refresh_every or overflow or S < 1e-100:
            M, S = _cdm_refresh(z, w, gamma)
            steps_since = 0
        if track and first_hit < 0 and d2 <= thresh2:
            first_hit = step_base + t + 1
    return S, M, steps_since, d2, first_hit


def _cdm_batch_loop(
    cindptr,
    crows,
    cvals,
    x,
    z,
    w,
    b,
    center,
    H,
    inv_denom,
    gamma,
    S,
    M,
    steps_since,
    refresh_every,
    guard,
    idx,
    track,
    ystar,
    thresh2,
    d2,
    step_base,
    first_hit,
):
    for t in range(idx.size):
        i = idx[t]
        lo = cindptr[i]
        hi = cindptr[i + 1]
        num = 0.0
        for k in range(lo, hi):
            num += cvals[k] * w[crows[k]]
        g = num / S + b[i] + H * (x[i] - center[i])
        delta = -g * inv_denom[i]
        if track:
            e = x[i] - ystar[i]
            d2 += delta * (2.0 * e + delta)
        x[i] += delta
        overflow = False
        dS = 0.0
        for k in range(lo, hi):
            j = crows[k]
            z[j] += delta * cvals[k]
            wn = np.exp((z[j] - M) / gamma)
            dS += wn - w[j]
            w[j] = wn
            if z[j] - M > guard:
                overflow = True
        S += dS
        steps_since += 1
        if steps_since >= refresh_every or overflow or S < 1e-100:
            M = z[0]
            for j in range(1, z.size):
                if z[j] > M:
                    M = z[j]
            S = 0.0
            for j in range(z.size):
                w[j] = np.exp((z[j] - M) / gamma)
                S += w[j]
            steps_since = 0
        if track and first_hit < 0 and d2 <= thresh2:
            first_hit = step_base + t + 1
    return S, M, steps_since, d2, first_hit


# ---------------------------------------------------------------------------
# accelerated coordinate-descent batch kernel
#
# Two-sequence accelerated scheme for convex f with componentwise constants
# L_i, sampling proportional to sqrt(L_i).  Maintains x, v and their images
# zx = A x + r, zv = A v + r so that the per-iteration cost is O(m + n + s):
# the extrapolated point y = (1-alpha) x + alpha v is formed densely, its
# exponent vector as the same combination of zx and zv, and the coordinate
# updates touch one column.
#
# Step weights: a_{k+1} solves Ssum^2 a^2 = A_k + a; alpha = a / A_{k+1};
# primal step 1/L_i on coordinate i; dual step a / p_i on coordinate i.
#
# Returns (A_k, f_last) where f_last is the objective value at the final x.
# ---------------------------------------------------------------------------


def acdm_batch_py(
    cindptr, crows, cvals, x, v, zx, zv, b, inv_L, sqrtL_over_sum, Ssum, gamma, A_k, idx
):
    S2 = Ssum * Ssum
    for t in range(idx.size):
        i = idx[t]
        a = (1.0 + np.sqrt(1.0 + 4.0 * S2 * A_k)) / (2.0 * S2)
        A_next = A_k + a
        alpha = a / A_next
        y = (1.0 - alpha) * x + alpha * v
        zy = (1.0 - alpha) * zx + alpha * zv
        My = float(zy.max())
        wy = np.exp((zy - My) / gamma)
        Sy = float(wy.sum())
        lo, hi = cindptr[i], cindptr[i + 1]
        rows_i = crows[lo:hi]
        vals_i = cvals[lo:hi]
        g = float(vals_i @ wy[rows_i]) / Sy + b[i]
        # primal move from y, dual move from v; both touch one column of A
        x[:] = y
        x[i] -= inv_L[i] * g
        zx[:] = zy
        zx[rows_i] -= (inv_L[i] * g) * vals_i
        dual_step = a / sqrtL_over_sum[i] * g
        v[i] -= dual_step
        zv[rows_i] -= dual_step * vals_i
        A_k = A_next
    Mx = float(zx.max())
    f_last = Mx + gamma * np.log(float(np.exp((zx - Mx) / gamma).sum())) + float(b @ x)
    return A_k, f_last


def _acdm_batch_loop(
    cindptr, crows, cvals, x, v, zx, zv, b, inv_L, sqrtL_over_sum, Ssum, gamma, A_k, idx
):
    n = x.size
    m = zx.size
    S2 = Ssum * Ssum
    y = np.empty(n)
    zy = np.empty(m)
    wy = np.empty(m)
    for t in range(idx.size):
        i = idx[t]
        a = (1.0 + np.sqrt(1.0 + 4.0 * S2 * A_k)) / (2.0 * S2)
        A_next = A_k + a
        alpha = a / A_next
        for q in range(n):
            y[q] = (1.0 - alpha) * x[q] + alpha * v[q]
        My = -np.inf
        for j in range(m):
            zy[j] = (1.0 - alpha) * zx[j] + alpha * zv[j]
            if zy[j] > My:
                My = zy[j]
        Sy = 0.0
        for j in range(m):
            wy[j] = np.exp((zy[j] - My) / gamma)
            Sy += wy[j]
        lo = cindptr[i]
        hi = cindptr[i + 1]
        num = 0.0
        for k in range(lo, hi):
            num += cvals[k] * wy[crows[k]]
        g = num / Sy + b[i]
        for q in range(n):
            x[q] = y[q]
        x[i] -= inv_L[i] * g
        for j in range(m):
            zx[j] = zy[j]
        for k in range(lo, hi):
            zx[crows[k]] -= (inv_L[i] * g) * cvals[k]
        dual_step = a / sqrtL_over_sum[i] * g
        v[i] -= dual_step
        for k in range(lo, hi):
            zv[crows[k]] -= dual_step * cvals[k]
        A_k = A_next
    Mx = -np.inf
    for j in range(m):
        if zx[j] > Mx:
            Mx = zx[j]
    Sx = 0.0
    for j in range(m):
        Sx += np.exp((zx[j] - Mx) / gamma)
    bx = 0.0
    for q in range(n):
        bx += b[q] * x[q]
    f_last = Mx + gamma * np.log(Sx) + bx
    return A_k, f_last


if _NUMBA_OK:
    csr_matvec = _njit(cache=True)(_csr_matvec_loop)
    csr_rmatvec = _njit(cache=True)(_csr_rmatvec_loop)
    cdm_batch = _njit(cache=True)(_cdm_batch_loop)
    acdm_batch = _njit(cache=True)(_acdm_batch_loop)
else:
    csr_matvec = csr_matvec_py
    csr_rmatvec = csr_rmatvec_py
    cdm_batch = cdm_batch_py
    acdm_batch = acdm_batch_py
