"""Log-sum-exp objective with offsets, its smoothness constants, and the
incrementally maintained exponent cache giving amortized O(column-nnz)
coordinate operations; plus the proximal wrapper used by the outer solver.

The objective is

    f(x) = gamma * ln sum_j exp(([A x]_j + r_j) / gamma) + <b, x> + c

with A sparse (m x n), r an m-vector of row offsets, b an n-vector and c a
scalar.  Values are always evaluated through the exp-normalize shift, so
finite inputs never overflow.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .sparse import SparseMatrix

__all__ = ["SoftMaxObjective", "SoftMaxCache", "DiagonalQuadratic", "ProxProblem"]

# rebuild the exponent state whenever a maintained z drifts this many gammas
# above the stale shift (exp((z-M)/gamma) stays far from overflow)
OVERFLOW_GUARD = 500.0


class SoftMaxCache:
    """Mutable per-run state for coordinate steps on a SoftMaxObjective.

    Maintains, for the current point ``x``:
        z[j] = [A x]_j + r_j      (updated additively on the touched column)
        w[j] = exp((z[j] - M) / gamma)
        S    = sum_j w[j]
        M    = exp-normalize shift (refreshed to max(z) periodically)

    A full refresh of (M, w, S) runs at least every m coordinate steps.
    Single-owner: never share one cache between concurrent runs.
    """

    __slots__ = ("x", "z", "w", "S", "M", "steps_since_refresh")

    def __init__(self, x, z, w, S, M, steps_since_refresh=0):
        self.x = x
        self.z = z
        self.w = w
        self.S = S
        self.M = M
        self.steps_since_refresh = steps_since_refresh


class SoftMaxObjective:
    """gamma * LSE((A x + r)/gamma) + <b, x> + c over a SparseMatrix A."""

    def __init__(self, A: SparseMatrix, b=None, r=None, c=0.0, gamma=1.0):
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        self.A = A
        self.m = A.m
        self.n = A.n
        self.b = np.zeros(self.n) if b is None else np.asarray(b, dtype=np.float64).copy()
        self.r = np.zeros(self.m) if r is None else np.asarray(r, dtype=np.float64).copy()
        self.c = float(c)
        self.gamma = float(gamma)
        if self.b.shape != (self.n,):
            raise ValueError(f"b must have length {self.n}")
        if self.r.shape != (self.m,):
            raise ValueError(f"r must have length {self.m}")
        if not (np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.r)) and np.isfinite(self.c)):
            raise ValueError("objective parameters must be finite")
        self._smoothness = None

    # -- full-vector path ---------------------------------------------------

    def _scores(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ValueError(f"x must have length {self.n}")
        if not np.all(np.isfinite(x)):
            raise ValueError("x must be finite")
        return self.A.matvec(x) + self.r

    def value(self, x) -> float:
        z = self._scores(x)
        M = float(z.max())
        S = float(np.exp((z - M) / self.gamma).sum())
        return M + self.gamma * np.log(S) + float(self.b @ x) + self.c

    def full_grad(self, x) -> np.ndarray:
        z = self._scores(x)
        M = float(z.max())
        w = np.exp((z - M) / self.gamma)
        p = w / w.sum()
        return self.A.rmatvec(p) + self.b

    def smoothness(self):
        """(L, L_vec): gradient and componentwise Lipschitz constants.

        L = max_j ||A_j||^2 / gamma, L_vec[i] = max_j A[j,i]^2 / gamma.
        """
        if self._smoothness is None:
            L = self.A.row_sqnorm_max() / self.gamma
            L_vec = self.A.col_sq_max() / self.gamma
            self._smoothness = (L, L_vec)
        return self._smoothness

    # -- cached coordinate path ----------------------------------------------

    def make_cache(self, x) -> SoftMaxCache:
        z = self._scores(x)
        M = float(z.max())
        w = np.exp((z - M) / self.gamma)
        return SoftMaxCache(np.asarray(x, dtype=np.float64).copy(), z, w, float(w.sum()), M)

    def refresh_cache(self, cache: SoftMaxCache) -> None:
        cache.M = float(cache.z.max())
        np.exp((cache.z - cache.M) / self.gamma, out=cache.w)
        cache.S = float(cache.w.sum())
        cache.steps_since_refresh = 0

    def value_from_cache(self, cache: SoftMaxCache) -> float:
        return cache.M + self.gamma * np.log(cache.S) + float(self.b @ cache.x) + self.c

    def coord_grad(self, cache: SoftMaxCache, i) -> float:
        """i-th gradient component from the cache, cost O(column-nnz)."""
        if not 0 <= i < self.n:
            raise IndexError(f"coordinate {i} out of range [0, {self.n})")
        rows, vals = self.A.column_nonzeros(i)
        return float(vals @ cache.w[rows]) / cache.S + self.b[i]

    def apply_coord_step(self, cache: SoftMaxCache, i, delta) -> None:
        """x[i] += delta, updating z, w, S on the touched column only."""
        if not 0 <= i < self.n:
            raise IndexError(f"coordinate {i} out of range [0, {self.n})")
        if not np.isfinite(delta):
            raise ValueError("delta must be finite")
        rows, vals = self.A.column_nonzeros(i)
        cache.x[i] += delta
        cache.z[rows] += delta * vals
        w_new = np.exp((cache.z[rows] - cache.M) / self.gamma)
        cache.S += float(w_new.sum() - cache.w[rows].sum())
        cache.w[rows] = w_new
        cache.steps_since_refresh += 1
        overflow = rows.size > 0 and float(cache.z[rows].max()) - cache.M > OVERFLOW_GUARD * self.gamma
        if cache.steps_since_refresh >= self.m or overflow or cache.S < 1e-100:
            self.refresh_cache(cache)


class DiagonalQuadratic:
    """Separable quadratic f(x) = 1/2 sum_i d_i (x_i - t_i)^2.

    Exposes the same solver-facing surface as SoftMaxObjective (value,
    full_grad, smoothness, coordinate cache); mainly used as an analytically
    solvable test target and as the surrogate hook for the reference-minimum
    search.
    """

    class _Cache:
        __slots__ = ("x",)

        def __init__(self, x):
            self.x = x

    def __init__(self, diag, target=None):
        self.d = np.asarray(diag, dtype=np.float64).copy()
        if np.any(self.d < 0):
            raise ValueError("curvatures must be nonnegative")
        self.n = self.d.size
        self.t = np.zeros(self.n) if target is None else np.asarray(target, dtype=np.float64).copy()

    def value(self, x) -> float:
        e = np.asarray(x, dtype=np.float64) - self.t
        return 0.5 * float(self.d @ (e * e))

    def full_grad(self, x) -> np.ndarray:
        return self.d * (np.asarray(x, dtype=np.float64) - self.t)

    def smoothness(self):
        return float(self.d.max()) if self.n else 0.0, self.d.copy()

    def minimizer(self) -> np.ndarray:
        return self.t.copy()

    def make_cache(self, x):
        return DiagonalQuadratic._Cache(np.asarray(x, dtype=np.float64).copy())

    def value_from_cache(self, cache) -> float:
        return self.value(cache.x)

    def coord_grad(self, cache, i) -> float:
        return float(self.d[i] * (cache.x[i] - self.t[i]))

    def coord_grad_at(self, y, i) -> float:
        return float(self.d[i] * (y[i] - self.t[i]))

    def apply_coord_step(self, cache, i, delta) -> None:
        cache.x[i] += delta


class ProxProblem:
    """F(y) = f(y) + (H/2) ||y - center||^2, the H-strongly-convex subproblem.

    Coordinate operations reuse the inner objective's cache unchanged; the
    quadratic term needs no cached state.  Componentwise constants are
    H + L_i.
    """

    def __init__(self, inner, center, H):
        if H <= 0:
            raise ValueError("H must be positive")
        self.inner = inner
        self.center = np.asarray(center, dtype=np.float64).copy()
        self.H = float(H)
        self.n = self.center.size

    def value(self, y) -> float:
        e = np.asarray(y, dtype=np.float64) - self.center
        return self.inner.value(y) + 0.5 * self.H * float(e @ e)

    def full_grad(self, y) -> np.ndarray:
        return self.inner.full_grad(y) + self.H * (np.asarray(y, dtype=np.float64) - self.center)

    def component_constants(self) -> np.ndarray:
        _, L_vec = self.inner.smoothness()
        return self.H + L_vec

    def make_cache(self, y):
        return self.inner.make_cache(y)

    def value_from_cache(self, cache) -> float:
        e = cache.x - self.center
        return self.inner.value_from_cache(cache) + 0.5 * self.H * float(e @ e)

    def coord_grad(self, cache, i) -> float:
        return self.inner.coord_grad(cache, i) + self.H * (cache.x[i] - self.center[i])

    def apply_coord_step(self, cache, i, delta) -> None:
        self.inner.apply_coord_step(cache, i, delta)
