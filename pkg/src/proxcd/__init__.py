"""Sparse-aware convex optimization: an accelerated proximal envelope around
weighted coordinate descent for log-sum-exp objectives, baseline first-order
methods, and an MDP reduction front-end."""

from ._kernels import numba_enabled
from .objective import DiagonalQuadratic, ProxProblem, SoftMaxCache, SoftMaxObjective
from .solvers import (
    ConvergenceTrace,
    MetaState,
    SolverBudget,
    acdm_solve,
    cdm_solve,
    check_stop_condition,
    choose_H,
    fgm_solve,
    gm_solve,
    inner_budget_fixed,
    inner_budget_prob,
    make_cdm_inner,
    meta_solve,
    outer_budget,
    plain_cdm_solve,
)
from .sparse import SparseMatrix, from_triplets, identity, read_matrix_market, write_matrix_market

__version__ = "0.1.0"

__all__ = [
    "numba_enabled",
    "SparseMatrix",
    "from_triplets",
    "identity",
    "read_matrix_market",
    "write_matrix_market",
    "SoftMaxObjective",
    "SoftMaxCache",
    "DiagonalQuadratic",
    "ProxProblem",
    "SolverBudget",
    "MetaState",
    "ConvergenceTrace",
    "inner_budget_fixed",
    "inner_budget_prob",
    "outer_budget",
    "choose_H",
    "check_stop_condition",
    "cdm_solve",
    "make_cdm_inner",
    "meta_solve",
    "gm_solve",
    "fgm_solve",
    "plain_cdm_solve",
    "acdm_solve",
    "__version__",
]
