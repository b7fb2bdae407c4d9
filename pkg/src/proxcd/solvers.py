"""Solvers: the accelerated proximal outer loop with a weighted
coordinate-descent inner solver, iteration-budget formulas, and the baseline
methods (gradient method, fast gradient method, uniform coordinate descent,
accelerated coordinate descent).

All solvers emit a ConvergenceTrace whose work axis counts one unit per
coordinate-gradient step and n units per full-gradient evaluation (the
accelerated coordinate method additionally charges n per iteration for its
dense two-sequence combination).  Randomness comes from a single seeded
numpy Generator (PCG64) per run, so trajectories replay bit-identically.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .objective import ProxProblem, SoftMaxObjective

__all__ = [
    "SolverBudget",
    "MetaState",
    "ConvergenceTrace",
    "inner_budget_fixed",
    "inner_budget_prob",
    "outer_budget",
    "choose_H",
    "check_stop_condition",
    "cdm_solve",
    "cdm_solve_tracked",
    "make_cdm_inner",
    "meta_solve",
    "gm_solve",
    "fgm_solve",
    "plain_cdm_solve",
    "acdm_solve",
]

# coefficient of the outer-iteration count: ceil(OUTER_COEFF * sqrt(H R^2 / eps))
OUTER_COEFF = 4.0 * math.sqrt(15.0) / 5.0

DEFAULT_MAX_CHUNK = 1 << 21


def _ceil_tolerant(x: float) -> int:
    """Ceiling that absorbs float noise at integer boundaries."""
    return int(math.ceil(round(x, 9)))


def inner_budget_fixed(Z, H, L) -> int:
    """Inner iterations sufficient for the relative stop criterion:
    ceil((Z/H) * ln((1 + L/H) * (3 + 2L/H)^2)).
    """
    if Z <= 0 or H <= 0 or L <= 0:
        raise ValueError("Z, H, L must be positive")
    ratio = L / H
    return _ceil_tolerant((Z / H) * math.log((1.0 + ratio) * (3.0 + 2.0 * ratio) ** 2))


def inner_budget_prob(Z, H, L, n_outer, delta) -> int:
    """High-probability inner budget:
    ceil((Z/H) * ln((n_outer/delta) * (1 + L/H) * (3 + 2L/H)^2)).
    """
    if Z <= 0 or H <= 0 or L <= 0 or n_outer <= 0:
        raise ValueError("Z, H, L, n_outer must be positive")
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    ratio = L / H
    arg = (n_outer / delta) * (1.0 + ratio) * (3.0 + 2.0 * ratio) ** 2
    return _ceil_tolerant((Z / H) * math.log(arg))


def outer_budget(H, r2, eps) -> int:
    """Outer iterations for target accuracy eps from squared initial distance
    r2: ceil((4*sqrt(15)/5) * sqrt(H * r2 / eps))."""
    if H <= 0 or r2 <= 0 or eps <= 0:
        raise ValueError("H, r2, eps must be positive")
    return _ceil_tolerant(OUTER_COEFF * math.sqrt(H * r2 / eps))


def choose_H(L_vec) -> float:
    """Regularization weight for the subproblems: the mean of the
    componentwise constants."""
    L_vec = np.asarray(L_vec, dtype=np.float64)
    if L_vec.size == 0:
        raise ValueError("L_vec must be nonempty")
    if np.any(L_vec < 0):
        raise ValueError("componentwise constants must be nonnegative")
    H = float(L_vec.mean())
    if H == 0.0:
        raise ValueError("all componentwise constants are zero")
    return H


@dataclass
class SolverBudget:
    """Bundle of the outer/inner iteration counts and the constants they
    were derived from."""

    H: float
    lam: float
    n_outer: int
    n_inner: int
    epsilon: float
    Z: float
    kappa: float
    delta: float | None = None

    def __post_init__(self):
        if self.H <= 0 or self.n_outer <= 0 or self.n_inner <= 0 or self.epsilon <= 0:
            raise ValueError("budget components must be positive")
        if abs(self.lam - 1.0 / (2.0 * self.H)) > 1e-12 * self.lam:
            raise ValueError("lam must equal 1/(2H)")
        if self.delta is not None and not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")

    @classmethod
    def from_objective(cls, obj, eps, r2, delta=None, H=None, n_inner=None, n_outer_cap=None):
        """Derive the budget from an objective's smoothness constants.

        H defaults to the mean componentwise constant; the inner budget comes
        from the fixed formula, or the high-probability one when delta is
        given; n_inner overrides both when set.
        """
        L, L_vec = obj.smoothness()
        if H is None:
            H = choose_H(L_vec)
        Z = float(np.sum(H + L_vec))
        n_outer = outer_budget(H, r2, eps)
        if n_outer_cap is not None:
            n_outer = min(n_outer, int(n_outer_cap))
        if n_inner is None:
            if delta is None:
                n_inner = inner_budget_fixed(Z, H, L)
            else:
                n_inner = inner_budget_prob(Z, H, L, n_outer, delta)
        return cls(
            H=float(H),
            lam=1.0 / (2.0 * H),
            n_outer=n_outer,
            n_inner=int(n_inner),
            epsilon=float(eps),
            Z=Z,
            kappa=Z / H,
            delta=delta,
        )

    def metadata(self) -> dict:
        return {
            "H": self.H,
            "N_outer": self.n_outer,
            "N_inner": self.n_inner,
            "epsilon": self.epsilon,
            "delta": self.delta,
        }


@dataclass
class MetaState:
    """Per-outer-iteration state of the accelerated proximal loop."""

    k: int
    a_next: float
    A_next: float
    x_tilde: np.ndarray
    x: np.ndarray
    v: np.ndarray


class ConvergenceTrace:
    """Sequence of (coordinate_ops, wall_seconds, f_value) events."""

    def __init__(self, method: str, seed: int | None = None):
        self.method = method
        self.seed = seed
        self.coordinate_ops: list[int] = []
        self.wall_seconds: list[float] = []
        self.f_values: list[float] = []
        self._t0 = time.perf_counter()

    def record(self, ops: int, f_value: float) -> None:
        if self.coordinate_ops and ops < self.coordinate_ops[-1]:
            raise ValueError("coordinate_ops must be nondecreasing")
        self.coordinate_ops.append(int(ops))
        self.wall_seconds.append(time.perf_counter() - self._t0)
        self.f_values.append(float(f_value))

    def __len__(self):
        return len(self.coordinate_ops)

    def final_value(self) -> float:
        return self.f_values[-1]

    def save_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("coordinate_ops,wall_seconds,f_value\n")
            for ops, wall, val in zip(self.coordinate_ops, self.wall_seconds, self.f_values):
                fh.write(f"{ops},{wall:.6f},{val:.17g}\n")

    def ops_to_reach(self, threshold: float) -> int | None:
        """First recorded coordinate_ops with f_value <= threshold."""
        for ops, val in zip(self.coordinate_ops, self.f_values):
            if val <= threshold:
                return ops
        return None


def _checkpoints(total: int, factor: float = 1.3):
    """Geometrically spaced event positions 1..total (always includes total)."""
    if total <= 0:
        return []
    out = []
    c = 1
    while c < total:
        out.append(c)
        c = max(c + 1, int(math.ceil(c * factor)))
    out.append(total)
    return out


def _sample_from_cum(rng, cum, k):
    u = rng.random(k)
    return np.searchsorted(cum, u, side="right").astype(np.int64)


def check_stop_condition(prox: ProxProblem, y) -> bool:
    """||grad F(y)||_2 <= (H/2) ||y - center||_2 for the subproblem F."""
    g = prox.full_grad(y)
    lhs = float(np.linalg.norm(g))
    rhs = 0.5 * prox.H * float(np.linalg.norm(np.asarray(y) - prox.center))
    return lhs <= rhs


# ---------------------------------------------------------------------------
# coordinate-descent engine
# ---------------------------------------------------------------------------


class _CDRun:
    """Driver for sampled coordinate steps on f(y) + (H/2)||y - center||^2.

    H = 0 with an arbitrary center gives plain coordinate descent on f.
    Dispatches to the compiled batch kernel when f is a SoftMaxObjective,
    otherwise loops over the objective's coordinate methods.
    """

    def __init__(self, obj, y0, H, center, inv_denom, cum_probs, rng, ystar=None):
        self.obj = obj
        self.H = float(H)
        self.center = np.asarray(center, dtype=np.float64)
        self.inv_denom = np.asarray(inv_denom, dtype=np.float64)
        self.cum = cum_probs
        self.rng = rng
        self.cache = obj.make_cache(np.asarray(y0, dtype=np.float64))
        self.fast = isinstance(obj, SoftMaxObjective)
        self.steps_done = 0
        self.track = ystar is not None
        if self.track:
            self.ystar = np.asarray(ystar, dtype=np.float64)
            e = self.cache.x - self.ystar
            self.d2 = float(e @ e)
        else:
            self.ystar = np.empty(0)
            self.d2 = 0.0
        self.thresh2 = -1.0
        self.first_hit = -1

    def advance(self, k: int) -> None:
        if k <= 0:
            return
        idx = _sample_from_cum(self.rng, self.cum, k)
        if self.fast:
            obj = self.obj
            cache = self.cache
            S, M, since, d2, hit = _kernels.cdm_batch(
                obj.A.cindptr,
                obj.A.cindices,
                obj.A.cdata,
                cache.x,
                cache.z,
                cache.w,
                obj.b,
                self.center,
                self.H,
                self.inv_denom,
                obj.gamma,
                cache.S,
                cache.M,
                cache.steps_since_refresh,
                obj.m,
                _guard(obj),
                idx,
                self.track,
                self.ystar,
                self.thresh2,
                self.d2,
                self.steps_done,
                self.first_hit,
            )
            cache.S, cache.M, cache.steps_since_refresh = float(S), float(M), int(since)
            self.d2, self.first_hit = float(d2), int(hit)
        else:
            obj = self.obj
            cache = self.cache
            for t in range(idx.size):
                i = int(idx[t])
                g = obj.coord_grad(cache, i) + self.H * (cache.x[i] - self.center[i])
                delta = -g * self.inv_denom[i]
                if self.track:
                    e = cache.x[i] - self.ystar[i]
                    self.d2 += delta * (2.0 * e + delta)
                obj.apply_coord_step(cache, i, delta)
                if self.track and self.first_hit < 0 and self.d2 <= self.thresh2:
                    self.first_hit = self.steps_done + t + 1
        self.steps_done += k
        if self.track:
            # resync the incrementally tracked distance between batches
            e = self.cache.x - self.ystar
            self.d2 = float(e @ e)
            if self.first_hit < 0 and self.d2 <= self.thresh2:
                self.first_hit = self.steps_done

    @property
    def x(self) -> np.ndarray:
        return self.cache.x

    def current_value(self) -> float:
        val = self.obj.value_from_cache(self.cache)
        if self.H > 0.0:
            e = self.cache.x - self.center
            val += 0.5 * self.H * float(e @ e)
        return val

    def prox_grad(self) -> np.ndarray:
        g = self.obj.full_grad(self.cache.x)
        if self.H > 0.0:
            g = g + self.H * (self.cache.x - self.center)
        return g


def _guard(obj: SoftMaxObjective) -> float:
    from .objective import OVERFLOW_GUARD

    return OVERFLOW_GUARD * obj.gamma


def _prox_cum_probs(prox: ProxProblem):
    denom = prox.component_constants()
    Z = float(denom.sum())
    cum = np.cumsum(denom / Z)
    cum[-1] = 1.0
    return cum, 1.0 / denom, Z


def cdm_solve(prox: ProxProblem, y0, n_steps, seed, *, check_every=0, trace=None, rng=None):
    """Sampled coordinate descent on the subproblem F.

    Coordinates are drawn with probability (H + L_i)/Z and stepped by
    1/(H + L_i) times the coordinate gradient of F.  When check_every > 0
    the relative stop condition is evaluated every check_every steps (one
    full gradient, charged n work units) and the run exits early once it
    holds.  Returns (y, trace).
    """
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    if rng is None:
        rng = np.random.default_rng(seed)
    cum, inv_denom, _ = _prox_cum_probs(prox)
    run = _CDRun(prox.inner, y0, prox.H, prox.center, inv_denom, cum, rng)
    if trace is None:
        trace = ConvergenceTrace("cdm-prox", seed)
    ops = 0
    trace.record(ops, run.current_value())
    stops = sorted(set(_checkpoints(n_steps)) | set(range(check_every, n_steps + 1, check_every) if check_every else ())) if n_steps > 0 else []
    prev = 0
    for stop in stops:
        run.advance(stop - prev)
        ops += stop - prev
        prev = stop
        trace.record(ops, run.current_value())
        if check_every and stop % check_every == 0:
            ops += prox.n
            g = run.prox_grad()
            lhs = float(np.linalg.norm(g))
            rhs = 0.5 * prox.H * float(np.linalg.norm(run.x - prox.center))
            if lhs <= rhs:
                break
    return run.x.copy(), trace


def cdm_solve_tracked(prox: ProxProblem, y0, n_steps, seed, ystar, radius):
    """As cdm_solve, additionally tracking ||y_k - ystar|| and returning the
    first step index at which it drops to `radius` (or -1).

    Returns (y, first_hit, final_distance).
    """
    rng = np.random.default_rng(seed)
    cum, inv_denom, _ = _prox_cum_probs(prox)
    run = _CDRun(prox.inner, y0, prox.H, prox.center, inv_denom, cum, rng, ystar=ystar)
    run.thresh2 = float(radius) ** 2
    if run.d2 <= run.thresh2:
        run.first_hit = 0
    for stop in _checkpoints(n_steps, factor=2.0):
        run.advance(stop - run.steps_done)
    return run.x.copy(), run.first_hit, math.sqrt(max(run.d2, 0.0))


def make_cdm_inner(n_steps, check_every=0):
    """Inner-solver handle for meta_solve running coordinate descent.

    The handle signature is (prox, y0, rng) -> (y, work_units).
    """

    def inner(prox, y0, rng):
        cum, inv_denom, _ = _prox_cum_probs(prox)
        run = _CDRun(prox.inner, y0, prox.H, prox.center, inv_denom, cum, rng)
        ops = 0
        done = 0
        while done < n_steps:
            step = n_steps - done if not check_every else min(check_every, n_steps - done)
            run.advance(step)
            done += step
            ops += step
            if check_every and done < n_steps:
                ops += prox.n
                g = run.prox_grad()
                lhs = float(np.linalg.norm(g))
                rhs = 0.5 * prox.H * float(np.linalg.norm(run.x - prox.center))
                if lhs <= rhs:
                    break
        return run.x.copy(), ops

    return inner


def meta_solve(
    f,
    x0,
    budget: SolverBudget,
    inner,
    seed=0,
    *,
    max_seconds=None,
    trace=None,
    on_outer=None,
    trace_factor=1.3,
    stall_window=None,
    stall_tol=0.0,
    stop_below=None,
):
    """Accelerated proximal outer loop around an inner subproblem solver.

    Each outer iteration extrapolates the center, solves
    min_y f(y) + (H/2)||y - center||^2 approximately with `inner`
    (warm-started at the center), and takes the outer step
    x <- x - a * grad f(v) with the full gradient at the subproblem solution.

    When stall_window is set, the loop also exits once the best observed
    f(v) has not improved by more than stall_tol over that many consecutive
    outer iterations.  Returns (v, trace).
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    v = x.copy()
    n = x.size
    rng = np.random.default_rng(seed)
    lam = budget.lam
    A = 0.0
    if trace is None:
        trace = ConvergenceTrace("ccdm", seed)
    ops = 0
    trace.record(ops, f.value(x))
    events = set(_checkpoints(budget.n_outer, trace_factor))
    t_start = time.perf_counter()
    best = math.inf
    since_improve = 0
    for k in range(budget.n_outer):
        a = 0.5 * (lam + math.sqrt(lam * lam + 4.0 * lam * A))
        A_next = A + a
        # exact root of a^2 = lam * (A + a)
        assert abs(a * a - lam * A_next) <= 1e-10 * max(lam * A_next, 1e-300)
        x_tilde = (A * v + a * x) / A_next
        prox = ProxProblem(f, x_tilde, budget.H)
        v, inner_ops = inner(prox, x_tilde, rng)
        if not np.all(np.isfinite(v)):
            raise RuntimeError(f"inner solver returned non-finite iterate at outer step {k}")
        g = f.full_grad(v)
        x = x - a * g
        A = A_next
        ops += inner_ops + n
        if on_outer is not None:
            on_outer(MetaState(k=k, a_next=a, A_next=A_next, x_tilde=x_tilde, x=x, v=v))
        stop = max_seconds is not None and time.perf_counter() - t_start > max_seconds
        if stall_window is not None:
            f_v = f.value(v)
            if f_v < best - stall_tol:
                best = f_v
                since_improve = 0
            else:
                since_improve += 1
                if since_improve >= stall_window:
                    stop = True
            if stop_below is not None and f_v <= stop_below:
                stop = True
        if (k + 1) in events or stop:
            f_v = f.value(v)
            trace.record(ops, f_v)
            if stop_below is not None and f_v <= stop_below:
                stop = True
        if stop:
            break
    return v, trace


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------


def gm_solve(f, x0, L, n_steps, *, max_seconds=None, trace=None, seed=None, trace_factor=1.3, stop_below=None):
    """Gradient method x <- x - (1/L) grad f(x); n work units per step."""
    if L <= 0:
        raise ValueError("L must be positive")
    x = np.asarray(x0, dtype=np.float64).copy()
    n = x.size
    if trace is None:
        trace = ConvergenceTrace("gm", seed)
    trace.record(0, f.value(x))
    t_start = time.perf_counter()
    prev = 0
    for stop in _checkpoints(n_steps, trace_factor):
        for _ in range(stop - prev):
            x -= f.full_grad(x) / L
        prev = stop
        f_x = f.value(x)
        trace.record(stop * n, f_x)
        if stop_below is not None and f_x <= stop_below:
            break
        if max_seconds is not None and time.perf_counter() - t_start > max_seconds:
            break
    return x, trace


def fgm_solve(f, x0, L, n_steps, *, max_seconds=None, trace=None, seed=None, restart=False, trace_factor=1.3, stop_below=None):
    """Two-sequence fast gradient method for convex L-smooth f.

    x_{k+1} = y_k - (1/L) grad f(y_k);  y_{k+1} = x_{k+1} + t/(t+3) (x_{k+1} - x_k).
    With restart=True the momentum counter resets whenever f increases
    (used by the reference-minimum search, not by benchmark runs).
    """
    if L <= 0:
        raise ValueError("L must be positive")
    x = np.asarray(x0, dtype=np.float64).copy()
    y = x.copy()
    n = x.size
    if trace is None:
        trace = ConvergenceTrace("fgm", seed)
    f_prev = f.value(x)
    trace.record(0, f_prev)
    t_start = time.perf_counter()
    t = 0
    prev = 0
    ops = 0
    for stop in _checkpoints(n_steps, trace_factor):
        for _ in range(stop - prev):
            x_new = y - f.full_grad(y) / L
            ops += n
            if restart:
                f_new = f.value(x_new)
                ops += n
                if f_new > f_prev:
                    t = 0
                    y = x_new.copy()
                    x = x_new
                    f_prev = f_new
                    continue
                f_prev = f_new
            y = x_new + (t / (t + 3.0)) * (x_new - x)
            x = x_new
            t += 1
        prev = stop
        f_x = f.value(x)
        trace.record(ops, f_x)
        if stop_below is not None and f_x <= stop_below:
            break
        if max_seconds is not None and time.perf_counter() - t_start > max_seconds:
            break
    return x, trace


def plain_cdm_solve(f, x0, L_vec, n_steps, seed, *, max_seconds=None, trace=None, trace_factor=1.3, stop_below=None):
    """Uniform-sampling coordinate descent, step 1/L_i on the drawn
    coordinate; coordinates with L_i = 0 are excluded from sampling."""
    L_vec = np.asarray(L_vec, dtype=np.float64)
    eligible = np.flatnonzero(L_vec > 0)
    if eligible.size == 0:
        raise ValueError("no coordinate has positive componentwise constant")
    n = L_vec.size
    probs = np.zeros(n)
    probs[eligible] = 1.0 / eligible.size
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    inv_denom = np.zeros(n)
    inv_denom[eligible] = 1.0 / L_vec[eligible]
    rng = np.random.default_rng(seed)
    run = _CDRun(f, x0, 0.0, np.zeros(n), inv_denom, cum, rng)
    if trace is None:
        trace = ConvergenceTrace("cdm", seed)
    trace.record(0, run.current_value())
    t_start = time.perf_counter()
    for stop in _checkpoints(n_steps, trace_factor):
        run.advance(stop - run.steps_done)
        f_x = run.current_value()
        trace.record(run.steps_done, f_x)
        if stop_below is not None and f_x <= stop_below:
            break
        if max_seconds is not None and time.perf_counter() - t_start > max_seconds:
            break
    return run.x.copy(), trace


def acdm_solve(f, x0, L_vec, n_steps, seed, *, max_seconds=None, trace=None, trace_factor=1.3, stop_below=None):
    """Accelerated coordinate descent, sampling proportional to sqrt(L_i).

    Maintains primal/extrapolation sequences densely, so each iteration
    costs O(n) besides the coordinate gradient; the trace charges n + 1
    work units per iteration.
    """
    L_vec = np.asarray(L_vec, dtype=np.float64)
    n = L_vec.size
    sqrtL = np.sqrt(L_vec)
    Ssum = float(sqrtL.sum())
    if Ssum <= 0:
        raise ValueError("componentwise constants are all zero")
    probs = sqrtL / Ssum
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    rng = np.random.default_rng(seed)
    x = np.asarray(x0, dtype=np.float64).copy()
    if trace is None:
        trace = ConvergenceTrace("acdm", seed)
    trace.record(0, f.value(x))
    t_start = time.perf_counter()
    if isinstance(f, SoftMaxObjective):
        inv_L = np.where(L_vec > 0, 1.0 / np.where(L_vec > 0, L_vec, 1.0), 0.0)
        v = x.copy()
        zx = f.A.matvec(x) + f.r
        zv = zx.copy()
        A_k = 0.0
        done = 0
        for stop in _checkpoints(n_steps, trace_factor):
            idx = _sample_from_cum(rng, cum, stop - done)
            A_k, f_last = _kernels.acdm_batch(
                f.A.cindptr, f.A.cindices, f.A.cdata,
                x, v, zx, zv, f.b, inv_L, probs, Ssum, f.gamma, A_k, idx,
            )
            done = stop
            f_x = float(f_last) + f.c
            trace.record(done * (n + 1), f_x)
            if stop_below is not None and f_x <= stop_below:
                break
            if max_seconds is not None and time.perf_counter() - t_start > max_seconds:
                break
        return x, trace
    # generic path: objective must expose coord_grad_at(y, i)
    v = x.copy()
    A_k = 0.0
    S2 = Ssum * Ssum
    done = 0
    for stop in _checkpoints(n_steps, trace_factor):
        idx = _sample_from_cum(rng, cum, stop - done)
        for i in idx:
            a = (1.0 + math.sqrt(1.0 + 4.0 * S2 * A_k)) / (2.0 * S2)
            A_next = A_k + a
            alpha = a / A_next
            y = (1.0 - alpha) * x + alpha * v
            g = f.coord_grad_at(y, int(i))
            x = y
            x[i] -= g / L_vec[i]
            v[i] -= a / probs[i] * g
            A_k = A_next
        done = stop
        f_x = f.value(x)
        trace.record(done * (n + 1), f_x)
        if stop_below is not None and f_x <= stop_below:
            break
        if max_seconds is not None and time.perf_counter() - t_start > max_seconds:
            break
    return x, trace
