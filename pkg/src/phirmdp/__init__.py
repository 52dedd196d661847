"""Robust MDPs with phi-divergence ambiguity sets: fast projections, robust Bellman updates, oracles."""

from .bellman import (
    BellmanOutcome,
    PolicyEvaluation,
    Termination,
    VIReport,
    classical_value_iteration,
    evaluate_policy_robust,
    extract_policy,
    nominal_bellman,
    robust_bellman,
    robust_bellman_state,
    robust_value_iteration,
)
from .core import (
    DivergenceKind,
    InstanceError,
    MdpInstance,
    ProjectionQuery,
    ProjectionResult,
    Status,
    read_instance,
    validate,
    write_instance,
)
from .divergence import divergence, dual_objective, phi, phi_conjugate
from .instancegen import random_projection_instance, random_rmdp
from .oracle import oracle_bellman, oracle_dual_scan, oracle_project_grid
from .projections import (
    InfeasibleMarginError,
    project,
    project_burg,
    project_chi2,
    project_kl,
    project_variation,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
