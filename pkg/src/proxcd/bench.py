"""Instance generators, reference-minimum search, and the benchmark harness
racing the solver suite on one instance.

Generated instances are binary sparse matrices; by default the linear term
is drawn as b = -A^T softmax(g) with g standard normal, which keeps the
objective bounded below (any b with a component outside the row space of A
makes the log-sum-exp objective unbounded, so raw gaussian b would leave
nothing meaningful to race toward).  ``b_mode="normal"`` gives the raw
i.i.d. standard-normal vector instead.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import BudgetExhausted, InputError
from .objective import DiagonalQuadratic, SoftMaxObjective
from .solvers import (
    SolverBudget,
    acdm_solve,
    choose_H,
    fgm_solve,
    gm_solve,
    make_cdm_inner,
    meta_solve,
    plain_cdm_solve,
)
from .sparse import SparseMatrix, from_triplets, read_matrix_market, write_matrix_market

__all__ = [
    "gen_uniform",
    "gen_hetero",
    "compute_fstar",
    "BenchConfig",
    "run_benchmark",
    "save_objective",
    "load_objective",
]

METHODS = ("gm", "fgm", "cdm", "acdm", "ccdm")


def _draw_b(A: SparseMatrix, rng, b_mode: str) -> np.ndarray:
    if b_mode == "normal":
        return rng.standard_normal(A.n)
    if b_mode == "bounded":
        g = rng.standard_normal(A.m)
        p = np.exp(g - g.max())
        p /= p.sum()
        return -A.rmatvec(p)
    raise InputError(f"unknown b_mode {b_mode!r}")


def gen_uniform(m, n, density=0.2, seed=0, b_mode="bounded"):
    """Uniformly sparse binary matrix: each entry is 1 independently with
    probability `density`.  Returns (A, b)."""
    if not 0.0 < density <= 1.0:
        raise InputError("density must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    mask = rng.random((m, n)) < density
    rows, cols = np.nonzero(mask)
    A = from_triplets(m, n, (rows.astype(np.int64), cols.astype(np.int64), np.ones(rows.size)))
    return A, _draw_b(A, rng, b_mode)


def gen_hetero(m, n, seed=0, b_mode="bounded"):
    """Heterogeneously sparse binary matrix: floor(0.9 m) light rows with
    floor(0.1 n) ones, the remaining rows with floor(0.9 n) ones, and row 0
    fully dense.  Returns (A, b)."""
    if m < 10 or n < 10:
        raise InputError("need m >= 10 and n >= 10")
    rng = np.random.default_rng(seed)
    n_light = int(math.floor(0.9 * m))
    k_light = int(math.floor(0.1 * n))
    k_heavy = int(math.floor(0.9 * n))
    rows, cols = [np.zeros(n, dtype=np.int64)], [np.arange(n, dtype=np.int64)]
    for j in range(1, m):
        k = k_light if j <= n_light else k_heavy
        pick = rng.choice(n, size=k, replace=False)
        rows.append(np.full(k, j, dtype=np.int64))
        cols.append(np.sort(pick).astype(np.int64))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    A = from_triplets(m, n, (rows, cols, np.ones(rows.size)))
    return A, _draw_b(A, rng, b_mode)


# ---------------------------------------------------------------------------
# reference minimum
# ---------------------------------------------------------------------------


def _instance_digest(obj, accuracy) -> str:
    h = hashlib.sha256()
    if isinstance(obj, SoftMaxObjective):
        for arr in (obj.A.rows, obj.A.indices, obj.A.data, obj.b, obj.r):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(np.array([obj.gamma, obj.c, obj.m, obj.n], dtype=np.float64).tobytes())
    else:
        h.update(repr(obj).encode())
    h.update(np.float64(accuracy).tobytes())
    return h.hexdigest()[:32]


def compute_fstar(
    obj,
    accuracy,
    *,
    r2=None,
    max_iters=2_000_000,
    max_seconds=120.0,
    cache_dir=None,
):
    """Reference minimum of the objective, cached to disk per instance.

    Quadratic surrogates are solved analytically.  With r2 (a bound on the
    squared distance from zero to a minimizer) the fast gradient method runs
    for the iteration count whose worst-case residual bound certifies
    `accuracy`.  Otherwise a restart-accelerated fast gradient descent runs
    until the best value stalls below `accuracy` improvement per sweep
    window; exhausting max_iters/max_seconds before stalling raises
    BudgetExhausted carrying the best value found.
    """
    if accuracy <= 0:
        raise InputError("accuracy must be positive")
    if isinstance(obj, DiagonalQuadratic):
        return obj.value(obj.minimizer())
    cache_path = None
    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
        cache_path = os.path.join(cache_dir, f"fstar_{_instance_digest(obj, accuracy)}.json")
        if os.path.exists(cache_path):
            with open(cache_path) as fh:
                return float(json.load(fh)["fstar"])
    L, _ = obj.smoothness()
    x0 = np.zeros(obj.n)
    if L == 0.0:
        # log-sum-exp part is constant; only the linear term remains
        if np.linalg.norm(obj.b) == 0.0:
            return obj.value(x0)
        raise BudgetExhausted("objective is linear and unbounded below", best=obj.value(x0))
    if r2 is not None:
        n_iters = int(math.ceil(2.0 * math.sqrt(L * r2 / accuracy)))
        if n_iters > max_iters:
            raise BudgetExhausted(
                f"certified run needs {n_iters} iterations (cap {max_iters})", best=None
            )
        x, trace = fgm_solve(obj, x0, L, n_iters, max_seconds=max_seconds)
        fstar = min(trace.f_values)
    else:
        fstar = _fgm_restart_best(obj, x0, L, accuracy, max_iters, max_seconds)
    if cache_path is not None:
        with open(cache_path, "w") as fh:
            json.dump({"fstar": fstar, "accuracy": accuracy}, fh)
    return fstar


def _fgm_restart_best(obj, x0, L, accuracy, max_iters, max_seconds):
    x = x0.copy()
    y = x.copy()
    t = 0
    f_prev = obj.value(x)
    best = f_prev
    window = 500
    improved_in_window = math.inf
    window_start_best = best
    t_start = time.perf_counter()
    for k in range(1, max_iters + 1):
        x_new = y - obj.full_grad(y) / L
        f_new = obj.value(x_new)
        if f_new > f_prev:
            t = 0
            y = x_new.copy()
        else:
            y = x_new + (t / (t + 3.0)) * (x_new - x)
            t += 1
        x = x_new
        f_prev = f_new
        best = min(best, f_new)
        if k % window == 0:
            improved_in_window = window_start_best - best
            if improved_in_window <= accuracy:
                return best
            window_start_best = best
            if time.perf_counter() - t_start > max_seconds:
                break
    raise BudgetExhausted(
        f"reference-minimum search did not stall below {accuracy} per {window} iterations",
        best=best,
    )


# ---------------------------------------------------------------------------
# objective files
# ---------------------------------------------------------------------------


def save_objective(obj: SoftMaxObjective, out_dir, matrix_name="A.mtx", name="objective.json"):
    """Write the matrix (Matrix Market) plus a JSON descriptor."""
    os.makedirs(out_dir, exist_ok=True)
    write_matrix_market(obj.A, os.path.join(out_dir, matrix_name))
    doc = {
        "matrix": matrix_name,
        "b": obj.b.tolist(),
        "gamma": obj.gamma,
        "c": obj.c,
    }
    if np.any(obj.r != 0.0):
        doc["r"] = obj.r.tolist()
    path = os.path.join(out_dir, name)
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return path


def _load_vector(spec, base_dir):
    if isinstance(spec, str):
        path = spec if os.path.isabs(spec) else os.path.join(base_dir, spec)
        if path.endswith(".json"):
            with open(path) as fh:
                return np.asarray(json.load(fh), dtype=np.float64)
        return np.loadtxt(path, dtype=np.float64, ndmin=1)
    return np.asarray(spec, dtype=np.float64)


def load_objective(path) -> SoftMaxObjective:
    """Read a JSON objective descriptor: {matrix, b, r?, gamma, c?}."""
    base = os.path.dirname(os.path.abspath(path))
    try:
        with open(path) as fh:
            doc = json.load(fh)
        mpath = doc["matrix"]
        if not os.path.isabs(mpath):
            mpath = os.path.join(base, mpath)
        A = read_matrix_market(mpath)
        b = _load_vector(doc["b"], base) if "b" in doc else None
        r = _load_vector(doc["r"], base) if "r" in doc else None
        return SoftMaxObjective(A, b=b, r=r, c=doc.get("c", 0.0), gamma=doc["gamma"])
    except (KeyError, ValueError, OSError, json.JSONDecodeError) as exc:
        raise InputError(f"bad objective file {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# benchmark harness
# ---------------------------------------------------------------------------


@dataclass
class BenchConfig:
    """One benchmark run: instance, temperature, contenders, and budgets."""

    kind: str = "uniform"  # uniform | hetero | file
    m: int = 100
    n: int = 200
    density: float = 0.2
    instance_seed: int = 0
    objective_path: str | None = None
    b_mode: str = "bounded"
    gamma: float = 0.6
    methods: tuple = METHODS
    time_budget_seconds: float = 30.0
    eps: float = 1e-3
    delta: float | None = None
    r2: float | None = None
    h: float | None = None
    n_inner: int | None = None
    check_every: int = 0
    seed: int = 0
    fstar_accuracy: float = 1e-10
    fstar_seconds: float = 120.0
    max_steps: int = 200_000_000
    trace_factor: float = 1.3
    stop_at_relative_residual: float | None = None
    sequential: bool = True
    out_dir: str | None = None

    def __post_init__(self):
        if not self.methods:
            raise InputError("at least one method is required")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise InputError(f"unknown methods: {bad}")
        if self.time_budget_seconds <= 0 or self.eps <= 0:
            raise InputError("budgets must be positive")

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                doc = json.load(fh)
            doc["methods"] = tuple(doc.get("methods", METHODS))
            return cls(**doc)
        except (TypeError, json.JSONDecodeError, OSError) as exc:
            raise InputError(f"bad benchmark config {path}: {exc}") from exc

    def to_json(self, path):
        doc = asdict(self)
        doc["methods"] = list(self.methods)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)


def _materialize(config: BenchConfig) -> SoftMaxObjective:
    if config.kind == "file":
        if not config.objective_path:
            raise InputError("kind 'file' needs objective_path")
        return load_objective(config.objective_path)
    if config.kind == "uniform":
        A, b = gen_uniform(config.m, config.n, config.density, config.instance_seed, config.b_mode)
    elif config.kind == "hetero":
        A, b = gen_hetero(config.m, config.n, config.instance_seed, config.b_mode)
    else:
        raise InputError(f"unknown instance kind {config.kind!r}")
    return SoftMaxObjective(A, b=b, gamma=config.gamma)


def _run_method(method, obj, config: BenchConfig, budget_info, stop_below=None):
    x0 = np.zeros(obj.n)
    L, L_vec = obj.smoothness()
    tb = config.time_budget_seconds
    steps = config.max_steps
    tf = config.trace_factor
    if method == "gm":
        _, trace = gm_solve(obj, x0, L, max(1, steps // obj.n), max_seconds=tb, seed=config.seed, trace_factor=tf, stop_below=stop_below)
    elif method == "fgm":
        _, trace = fgm_solve(obj, x0, L, max(1, steps // obj.n), max_seconds=tb, seed=config.seed, trace_factor=tf, stop_below=stop_below)
    elif method == "cdm":
        _, trace = plain_cdm_solve(obj, x0, L_vec, steps, config.seed, max_seconds=tb, trace_factor=tf, stop_below=stop_below)
    elif method == "acdm":
        _, trace = acdm_solve(obj, x0, L_vec, max(1, steps // (obj.n + 1)), config.seed, max_seconds=tb, trace_factor=tf, stop_below=stop_below)
    elif method == "ccdm":
        budget = budget_info
        _, trace = meta_solve(
            obj,
            x0,
            budget,
            make_cdm_inner(budget.n_inner, check_every=config.check_every),
            seed=config.seed,
            max_seconds=tb,
            trace_factor=max(1.0 + (tf - 1.0) / 2.0, 1.001),
            stop_below=stop_below,
        )
    else:
        raise InputError(f"unknown method {method!r}")
    return trace


def run_benchmark(config: BenchConfig, out_dir=None):
    """Race the configured methods on one instance.

    Per method, writes trace_<method>.csv and meta_<method>.json under the
    output directory, plus the instance files, the resolved config, the
    reference minimum, and summary.json.  Failures of individual methods are
    isolated and recorded; partial results are still persisted.
    """
    out_dir = out_dir or config.out_dir
    if out_dir is None:
        raise InputError("benchmark needs an output directory")
    os.makedirs(out_dir, exist_ok=True)
    obj = _materialize(config)
    save_objective(obj, out_dir)
    config.to_json(os.path.join(out_dir, "config.json"))
    fstar = compute_fstar(
        obj,
        config.fstar_accuracy,
        max_seconds=config.fstar_seconds,
        cache_dir=out_dir,
    )
    f0 = obj.value(np.zeros(obj.n))
    L, L_vec = obj.smoothness()
    H = config.h if config.h is not None else choose_H(L_vec)
    r2 = config.r2 if config.r2 is not None else max(1.0, float(obj.n))
    ccdm_budget = SolverBudget.from_objective(
        obj, config.eps, r2, delta=config.delta, H=H, n_inner=config.n_inner,
        n_outer_cap=10_000_000,
    )

    stop_below = None
    if config.stop_at_relative_residual is not None:
        stop_below = fstar + config.stop_at_relative_residual * (f0 - fstar)

    def one(method):
        try:
            trace = _run_method(method, obj, config, ccdm_budget, stop_below=stop_below)
            return method, trace, None
        except Exception as exc:  # isolate per-method failures
            return method, None, f"{type(exc).__name__}: {exc}"

    if config.sequential or len(config.methods) == 1:
        outcomes = [one(m) for m in config.methods]
    else:
        with ThreadPoolExecutor(max_workers=len(config.methods)) as pool:
            outcomes = list(pool.map(one, config.methods))

    summary = {
        "fstar": fstar,
        "f0": f0,
        "H": H,
        "N_inner": ccdm_budget.n_inner,
        "N_outer": ccdm_budget.n_outer,
        "methods": {},
    }
    traces = {}
    for method, trace, err in outcomes:
        if err is not None:
            summary["methods"][method] = {"error": err}
            continue
        trace.save_csv(os.path.join(out_dir, f"trace_{method}.csv"))
        meta = {
            "method": method,
            "seed": config.seed,
            "H": H,
            "N_outer": ccdm_budget.n_outer if method == "ccdm" else None,
            "N_inner": ccdm_budget.n_inner if method == "ccdm" else None,
            "epsilon": config.eps,
            "delta": config.delta,
        }
        with open(os.path.join(out_dir, f"meta_{method}.json"), "w") as fh:
            json.dump(meta, fh, indent=2)
        entry = {"final_f": trace.final_value(), "events": len(trace)}
        for rel in (1e-1, 1e-2, 1e-3):
            entry[f"ops_to_{rel:g}"] = trace.ops_to_reach(fstar + rel * (f0 - fstar))
        summary["methods"][method] = entry
        traces[method] = trace
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary, traces
