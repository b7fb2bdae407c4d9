"""Command-line interface.

Subcommands: gen, solve, mdp-solve, bench, fstar.  Exit codes: 0 success,
2 invalid input, 3 budget exhausted.  All randomness is controlled by
--seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import bench as bench_mod
from . import mdp as mdp_mod
from .errors import BudgetExhausted, InputError
from .objective import SoftMaxObjective
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

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_BUDGET = 3


def _cmd_gen(args):
    if args.kind == "uniform":
        A, b = bench_mod.gen_uniform(args.m, args.n, args.density, args.seed, args.b_mode)
    else:
        A, b = bench_mod.gen_hetero(args.m, args.n, args.seed, args.b_mode)
    obj = SoftMaxObjective(A, b=b, gamma=args.gamma)
    path = bench_mod.save_objective(obj, args.out)
    print(f"wrote {path} (m={A.m}, n={A.n}, nnz={A.nnz})")
    return EXIT_OK


def _cmd_solve(args):
    obj = bench_mod.load_objective(args.objective)
    os.makedirs(args.out, exist_ok=True)
    x0 = np.zeros(obj.n)
    L, L_vec = obj.smoothness()
    r2 = args.r2 if args.r2 is not None else max(1.0, float(x0 @ x0))
    H = args.h if args.h is not None else choose_H(L_vec)
    budget = SolverBudget.from_objective(
        obj, args.eps, r2, delta=args.delta, H=H, n_outer_cap=10_000_000
    )
    steps = args.max_steps
    if args.method == "gm":
        _, trace = gm_solve(obj, x0, L, max(1, steps // obj.n), max_seconds=args.time_budget, seed=args.seed)
    elif args.method == "fgm":
        _, trace = fgm_solve(obj, x0, L, max(1, steps // obj.n), max_seconds=args.time_budget, seed=args.seed)
    elif args.method == "cdm":
        _, trace = plain_cdm_solve(obj, x0, L_vec, steps, args.seed, max_seconds=args.time_budget)
    elif args.method == "acdm":
        _, trace = acdm_solve(obj, x0, L_vec, max(1, steps // (obj.n + 1)), args.seed, max_seconds=args.time_budget)
    else:
        _, trace = meta_solve(
            obj,
            x0,
            budget,
            make_cdm_inner(budget.n_inner, check_every=args.check_every),
            seed=args.seed,
            max_seconds=args.time_budget,
        )
    trace.save_csv(os.path.join(args.out, f"trace_{args.method}.csv"))
    meta = {
        "method": args.method,
        "seed": args.seed,
        "H": H,
        "N_outer": budget.n_outer,
        "N_inner": budget.n_inner,
        "epsilon": args.eps,
        "delta": args.delta,
    }
    with open(os.path.join(args.out, f"meta_{args.method}.json"), "w") as fh:
        json.dump(meta, fh, indent=2)
    print(f"{args.method}: final f = {trace.final_value():.12g} after {trace.coordinate_ops[-1]} ops")
    return EXIT_OK


def _cmd_mdp_solve(args):
    mdp = mdp_mod.load_mdp(args.mdp)
    red = mdp_mod.build_reduced(mdp, args.eps_policy, kind=args.kind)
    os.makedirs(args.out, exist_ok=True)
    v, trace, budget = mdp_mod.solve_reduced(
        red,
        seed=args.seed,
        check_every=args.check_every,
        n_outer_cap=args.outer_cap,
        stall_window=args.stall_window,
        max_seconds=args.time_budget,
    )
    policy = mdp_mod.extract_policy(red, v, greedy=args.greedy)
    lower, upper = mdp_mod.smoothed_value_bounds(red, v)
    doc = {
        "kind": red.kind,
        "sigma": red.sigma,
        "eps_opt": red.eps_opt,
        "v": v.tolist(),
        "policy": [p.tolist() for p in policy],
        "smoothed_bounds": [lower, upper],
    }
    with open(os.path.join(args.out, "policy.json"), "w") as fh:
        json.dump(doc, fh)
    trace.save_csv(os.path.join(args.out, "trace_mdp.csv"))
    print(f"{red.kind}: sigma={red.sigma:.3e} eps_opt={red.eps_opt:.3e} bounds=[{lower:.6g}, {upper:.6g}]")
    return EXIT_OK


def _cmd_bench(args):
    config = bench_mod.BenchConfig.from_json(args.config)
    summary, _ = bench_mod.run_benchmark(config, out_dir=args.out)
    for method, entry in summary["methods"].items():
        if "error" in entry:
            print(f"{method}: FAILED ({entry['error']})")
        else:
            print(f"{method}: final f = {entry['final_f']:.12g}")
    return EXIT_OK


def _cmd_fstar(args):
    obj = bench_mod.load_objective(args.objective)
    fstar = bench_mod.compute_fstar(
        obj, args.accuracy, r2=args.r2, max_seconds=args.max_seconds
    )
    with open(args.out, "w") as fh:
        json.dump({"fstar": fstar, "accuracy": args.accuracy}, fh)
    print(f"fstar = {fstar:.17g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="proxcd", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a benchmark instance")
    g.add_argument("--kind", choices=["uniform", "hetero"], required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--density", type=float, default=0.2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--gamma", type=float, default=0.6)
    g.add_argument("--b-mode", choices=["bounded", "normal"], default="bounded")
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen)

    s = sub.add_parser("solve", help="run one solver on an objective file")
    s.add_argument("--objective", required=True)
    s.add_argument("--method", choices=list(bench_mod.METHODS), required=True)
    s.add_argument("--eps", type=float, default=1e-3)
    s.add_argument("--delta", type=float, default=None)
    s.add_argument("--r2", type=float, default=None)
    s.add_argument("--h", type=float, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--time-budget", type=float, default=None)
    s.add_argument("--check-every", type=int, default=0)
    s.add_argument("--max-steps", type=int, default=50_000_000)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_solve)

    m = sub.add_parser("mdp-solve", help="reduce an MDP and solve it")
    m.add_argument("--mdp", required=True)
    m.add_argument("--kind", choices=["amdp", "dmdp"], required=True)
    m.add_argument("--eps-policy", type=float, required=True)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--greedy", action="store_true", help="argmax policy instead of softmax")
    m.add_argument("--check-every", type=int, default=0)
    m.add_argument("--outer-cap", type=int, default=None)
    m.add_argument("--stall-window", type=int, default=200)
    m.add_argument("--time-budget", type=float, default=None)
    m.add_argument("--out", required=True)
    m.set_defaults(func=_cmd_mdp_solve)

    b = sub.add_parser("bench", help="race the solver suite on one instance")
    b.add_argument("--config", required=True)
    b.add_argument("--out", required=True)
    b.set_defaults(func=_cmd_bench)

    f = sub.add_parser("fstar", help="reference minimum of an objective")
    f.add_argument("--objective", required=True)
    f.add_argument("--accuracy", type=float, required=True)
    f.add_argument("--r2", type=float, default=None)
    f.add_argument("--max-seconds", type=float, default=120.0)
    f.add_argument("--out", required=True)
    f.set_defaults(func=_cmd_fstar)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BudgetExhausted as exc:
        best = f" (best value so far: {exc.best:.12g})" if exc.best is not None else ""
        print(f"budget exhausted: {exc}{best}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
