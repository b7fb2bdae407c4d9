"""Markov decision process front-end.

Reduces an average-reward or discounted MDP to minimizing a smoothed
max-type objective over the value vector:

    F(v) = max_{mu in simplex} ( mu^T ((gd*P - I_hat) v + r) + <b, v> )

is smoothed at temperature sigma = eps_opt / (2 ln m) into a log-sum-exp
objective whose minimization recovers an approximately optimal value vector,
from which a randomized policy is extracted per state.  A value-iteration
oracle is provided for testing.

Here P is the (m x n) state-transition matrix with one row per state-action
pair, I_hat selects the owning state of each row, r holds rewards in [0, 1],
gd is the discount, and q the initial state distribution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .objective import SoftMaxObjective
from .sparse import SparseMatrix, from_triplets

__all__ = [
    "MdpInstance",
    "ReducedProblem",
    "accuracy_map",
    "build_reduced",
    "smoothed_value_bounds",
    "exact_minimax_value",
    "extract_policy",
    "value_iteration",
    "policy_value",
    "random_mdp",
    "solve_reduced",
    "load_mdp",
    "save_mdp",
]

_ROW_SUM_TOL = 1e-12


class MdpInstance:
    """Finite MDP with per-state action blocks.

    Row k of P is the transition distribution of the k-th state-action pair;
    state i owns rows offsets[i]:offsets[i+1].
    """

    def __init__(self, n, offsets, P: SparseMatrix, r, gamma_disc, q=None):
        self.n = int(n)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.P = P
        self.r = np.asarray(r, dtype=np.float64).copy()
        self.gamma_disc = float(gamma_disc)
        self.m = P.m
        self.q = np.full(self.n, 1.0 / self.n) if q is None else np.asarray(q, dtype=np.float64).copy()
        self._validate()

    def _validate(self):
        if self.offsets.shape != (self.n + 1,) or self.offsets[0] != 0 or self.offsets[-1] != self.m:
            raise ValueError("offsets must run from 0 to the number of actions")
        if np.any(np.diff(self.offsets) < 1):
            raise ValueError("every state needs at least one action")
        if self.P.n != self.n:
            raise ValueError("transition matrix column count must equal the state count")
        if not 0.0 < self.gamma_disc <= 1.0:
            raise ValueError("discount must lie in (0, 1]")
        if self.r.shape != (self.m,) or np.any(self.r < 0) or np.any(self.r > 1):
            raise ValueError("rewards must lie in [0, 1], one per state-action pair")
        if np.any(self.P.data < 0):
            raise ValueError("transition probabilities must be nonnegative")
        row_sums = np.bincount(self.P.rows, weights=self.P.data, minlength=self.m)
        if np.any(np.abs(row_sums - 1.0) > _ROW_SUM_TOL):
            raise ValueError("every transition row must sum to 1")
        if self.q.shape != (self.n,) or np.any(self.q < 0) or abs(self.q.sum() - 1.0) > 1e-9:
            raise ValueError("q must be a distribution over states")

    def state_of_row(self) -> np.ndarray:
        out = np.empty(self.m, dtype=np.int64)
        for i in range(self.n):
            out[self.offsets[i] : self.offsets[i + 1]] = i
        return out


@dataclass
class ReducedProblem:
    """Smoothed objective produced from an MDP plus the mapping constants."""

    objective: SoftMaxObjective
    sigma: float
    kind: str
    eps_opt: float
    mdp: MdpInstance


def accuracy_map(eps_tilde, gamma_disc, kind) -> float:
    """Map policy accuracy to optimization accuracy: eps_tilde/6 for the
    average-reward kind, (1-gd)*eps_tilde/6 for the discounted kind (the
    gd = 1 boundary falls back to the average-reward map)."""
    if eps_tilde <= 0:
        raise ValueError("eps_tilde must be positive")
    if not 0.0 < gamma_disc <= 1.0:
        raise ValueError("discount must lie in (0, 1]")
    if kind not in ("amdp", "dmdp"):
        raise ValueError(f"unknown MDP kind {kind!r}")
    if kind == "amdp" or gamma_disc == 1.0:
        return eps_tilde / 6.0
    return (1.0 - gamma_disc) * eps_tilde / 6.0


def build_reduced(mdp: MdpInstance, eps_tilde, kind=None) -> ReducedProblem:
    """Assemble the smoothed objective for an MDP.

    A = gd*P - I_hat (I_hat has row k equal to e_{state(k)}), row offsets r,
    linear term b = (1-gd) q (zero for the average-reward kind), constant
    -sigma ln m, temperature sigma = eps_opt / (2 ln m).
    """
    if kind is None:
        kind = "amdp" if mdp.gamma_disc == 1.0 else "dmdp"
    if kind == "amdp" and mdp.gamma_disc != 1.0:
        raise ValueError("average-reward reduction requires discount 1")
    m, n = mdp.m, mdp.n
    if m < 2:
        raise ValueError("need at least 2 state-action pairs (ln m must be positive)")
    eps_opt = accuracy_map(eps_tilde, mdp.gamma_disc, kind)
    sigma = eps_opt / (2.0 * np.log(m))
    state = mdp.state_of_row()
    rows = np.concatenate([mdp.P.rows, np.arange(m, dtype=np.int64)])
    cols = np.concatenate([mdp.P.indices, state])
    vals = np.concatenate([mdp.gamma_disc * mdp.P.data, -np.ones(m)])
    A = from_triplets(m, n, (rows, cols, vals))
    b = np.zeros(n) if kind == "amdp" else (1.0 - mdp.gamma_disc) * mdp.q
    obj = SoftMaxObjective(A, b=b, r=mdp.r, c=-sigma * np.log(m), gamma=sigma)
    return ReducedProblem(objective=obj, sigma=sigma, kind=kind, eps_opt=eps_opt, mdp=mdp)


def smoothed_value_bounds(red: ReducedProblem, v):
    """(lower, upper) bracketing the exact max-type objective at v; the gap
    is exactly sigma * ln m."""
    lower = red.objective.value(v)
    return lower, lower + red.sigma * np.log(red.mdp.m)


def exact_minimax_value(red: ReducedProblem, v) -> float:
    """Dense evaluation of the unsmoothed objective at v."""
    obj = red.objective
    scores = obj.A.matvec(np.asarray(v, dtype=np.float64)) + obj.r
    return float(scores.max()) + float(obj.b @ np.asarray(v, dtype=np.float64))


def extract_policy(red: ReducedProblem, v, greedy=False) -> list[np.ndarray]:
    """Per-state action distribution from the smoothed scores at v.

    pi_i(a) is proportional to exp((score_(i,a)) / sigma) within state i,
    computed with a per-state exp-normalize shift; greedy=True returns the
    one-hot argmax instead.
    """
    obj = red.objective
    scores = obj.A.matvec(np.asarray(v, dtype=np.float64)) + obj.r
    offsets = red.mdp.offsets
    policy = []
    for i in range(red.mdp.n):
        seg = scores[offsets[i] : offsets[i + 1]]
        if greedy:
            p = np.zeros(seg.size)
            p[int(np.argmax(seg))] = 1.0
        else:
            e = np.exp((seg - seg.max()) / red.sigma)
            p = e / e.sum()
        policy.append(p)
    return policy


def _segment_max_argmax(scores, offsets, n):
    vmax = np.empty(n)
    amax = np.empty(n, dtype=np.int64)
    for i in range(n):
        seg = scores[offsets[i] : offsets[i + 1]]
        j = int(np.argmax(seg))
        amax[i] = j
        vmax[i] = seg[j]
    return vmax, amax


def value_iteration(mdp: MdpInstance, tol=1e-9, max_iters=1_000_000):
    """Fixed point of the Bellman operator.

    Discounted case: sup-norm contraction, returns (v, greedy policy,
    q^T v).  Average-reward case (discount 1): relative value iteration on
    the half-damped transition kernel, returns (bias vector, greedy policy,
    gain).  Raises RuntimeError if the tolerance is not met within
    max_iters sweeps.
    """
    n, m = mdp.n, mdp.m
    gd = mdp.gamma_disc
    v = np.zeros(n)
    if gd < 1.0:
        for _ in range(max_iters):
            scores = mdp.r + gd * mdp.P.matvec(v)
            v_new, amax = _segment_max_argmax(scores, mdp.offsets, n)
            delta = float(np.max(np.abs(v_new - v)))
            v = v_new
            if gd * delta / (1.0 - gd) <= tol:
                policy = [_one_hot(mdp, i, amax[i]) for i in range(n)]
                return v, policy, float(mdp.q @ v)
        raise RuntimeError("value iteration did not reach tolerance within the sweep cap")
    # average-reward: aperiodicity transform P~ = (1-tau) I + tau P, r~ = tau r
    tau = 0.5
    h = np.zeros(n)
    state = mdp.state_of_row()
    for _ in range(max_iters):
        scores = tau * mdp.r + (1.0 - tau) * h[state] + tau * mdp.P.matvec(h)
        t_h, amax = _segment_max_argmax(scores, mdp.offsets, n)
        diff = t_h - h
        span = float(diff.max() - diff.min())
        h = t_h - t_h[0]
        if span <= tau * tol:
            gain = float(0.5 * (diff.max() + diff.min())) / tau
            policy = [_one_hot(mdp, i, amax[i]) for i in range(n)]
            return h, policy, gain
    raise RuntimeError("relative value iteration did not reach tolerance within the sweep cap")


def _one_hot(mdp, i, a):
    p = np.zeros(int(mdp.offsets[i + 1] - mdp.offsets[i]))
    p[a] = 1.0
    return p


def policy_value(mdp: MdpInstance, policy):
    """Exact evaluation of a (possibly randomized) policy.

    Discounted case: returns (value vector, q^T value).  Average-reward
    case: returns (per-state one-step expected reward, gain), the gain
    computed from the stationary distribution of the policy's chain.
    """
    n = mdp.n
    P_pi = np.zeros((n, n))
    r_pi = np.zeros(n)
    dense_P = mdp.P.to_dense()
    for i in range(n):
        lo, hi = mdp.offsets[i], mdp.offsets[i + 1]
        w = np.asarray(policy[i], dtype=np.float64)
        P_pi[i] = w @ dense_P[lo:hi]
        r_pi[i] = float(w @ mdp.r[lo:hi])
    if mdp.gamma_disc < 1.0:
        v = np.linalg.solve(np.eye(n) - mdp.gamma_disc * P_pi, r_pi)
        return v, float(mdp.q @ v)
    # stationary distribution: rho^T P_pi = rho^T, sum rho = 1
    Aeq = np.vstack([P_pi.T - np.eye(n), np.ones((1, n))])
    beq = np.concatenate([np.zeros(n), [1.0]])
    rho, *_ = np.linalg.lstsq(Aeq, beq, rcond=None)
    rho = np.clip(rho, 0.0, None)
    rho /= rho.sum()
    return r_pi, float(rho @ r_pi)


def random_mdp(n, actions_per_state, support, seed, gamma_disc=0.9) -> MdpInstance:
    """Random MDP: each transition row is a Dirichlet(1) draw over `support`
    distinct next states; rewards i.i.d. uniform on [0, 1]; q uniform."""
    if n < 1:
        raise ValueError("need at least one state")
    if support > n:
        raise ValueError("support cannot exceed the state count")
    rng = np.random.default_rng(seed)
    m = n * actions_per_state
    rows, cols, vals = [], [], []
    for k in range(m):
        nxt = rng.choice(n, size=support, replace=False)
        p = np.ones(1) if support == 1 else rng.dirichlet(np.ones(support))
        rows.extend([k] * support)
        cols.extend(nxt.tolist())
        vals.extend(p.tolist())
    P = from_triplets(
        m, n, (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64), np.array(vals))
    )
    r = rng.uniform(0.0, 1.0, size=m)
    offsets = np.arange(0, m + 1, actions_per_state, dtype=np.int64)
    return MdpInstance(n, offsets, P, r, gamma_disc)


def _pin_first_coordinate(obj: SoftMaxObjective) -> SoftMaxObjective:
    """Objective restricted to v[0] = 0 (drop column 0 of A and b[0])."""
    A = obj.A
    keep = A.indices != 0
    rows = A.rows[keep]
    cols = A.indices[keep] - 1
    vals = A.data[keep]
    sub = from_triplets(A.m, A.n - 1, (rows, cols, vals))
    return SoftMaxObjective(sub, b=obj.b[1:], r=obj.r, c=obj.c, gamma=obj.gamma)


def solve_reduced(
    red: ReducedProblem,
    seed=0,
    *,
    r2=None,
    n_inner=None,
    check_every=0,
    n_outer_cap=None,
    stall_window=None,
    stall_tol=None,
    max_seconds=None,
):
    """Minimize the smoothed objective with the accelerated proximal
    coordinate-descent solver and return (v, trace, budget).

    The average-reward objective is translation-degenerate along the
    all-ones direction (rows of A sum to zero), so v[0] is pinned to 0
    during optimization and re-inserted afterwards.
    """
    from .solvers import SolverBudget, make_cdm_inner, meta_solve

    obj = red.objective
    pinned = red.kind == "amdp"
    work = _pin_first_coordinate(obj) if pinned else obj
    if r2 is None:
        r2 = max(1.0, float(work.n))
    budget = SolverBudget.from_objective(
        work, red.eps_opt, r2, n_inner=n_inner, n_outer_cap=n_outer_cap
    )
    if stall_tol is None:
        stall_tol = 0.01 * red.eps_opt
    v, trace = meta_solve(
        work,
        np.zeros(work.n),
        budget,
        make_cdm_inner(budget.n_inner, check_every=check_every),
        seed=seed,
        stall_window=stall_window,
        stall_tol=stall_tol,
        max_seconds=max_seconds,
    )
    if pinned:
        v = np.concatenate(([0.0], v))
    return v, trace, budget


def save_mdp(mdp: MdpInstance, path) -> None:
    doc = {
        "n": mdp.n,
        "actions": np.diff(mdp.offsets).tolist(),
        "transitions": [
            [int(r), int(c), float(v)] for r, c, v in zip(mdp.P.rows, mdp.P.indices, mdp.P.data)
        ],
        "rewards": mdp.r.tolist(),
        "gamma": mdp.gamma_disc,
        "q": mdp.q.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_mdp(path) -> MdpInstance:
    with open(path) as fh:
        doc = json.load(fh)
    n = int(doc["n"])
    counts = np.asarray(doc["actions"], dtype=np.int64)
    if counts.shape != (n,):
        raise ValueError("actions must list one count per state")
    offsets = np.concatenate(([0], np.cumsum(counts)))
    m = int(offsets[-1])
    trip = doc["transitions"]
    rows = np.array([t[0] for t in trip], dtype=np.int64)
    cols = np.array([t[1] for t in trip], dtype=np.int64)
    vals = np.array([t[2] for t in trip], dtype=np.float64)
    P = from_triplets(m, n, (rows, cols, vals))
    return MdpInstance(n, offsets, P, doc["rewards"], doc["gamma"], doc.get("q"))
