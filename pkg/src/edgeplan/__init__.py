"""Robust multi-period edge service placement and resource reservation planner."""

from .decomposition import (
    CcgConfig,
    CcgResult,
    solve_baseline,
    solve_deterministic,
    solve_robust,
    solve_static_robust,
    worst_case_recourse,
)
from .evaluate import EvalReport, monte_carlo_eval, sample_trajectories
from .instance import (
    CostBreakdown,
    CostSchedule,
    FirstStage,
    Instance,
    InstanceError,
    RecoursePlan,
    Topology,
    cost_breakdown,
    load_instance,
    save_instance,
    validate_recourse,
)
from .oracle import exact_full, exact_q
from .solver import LinearModel, SolveParams, SolveResult, dualize, export_model, solve
from .uncertainty import (
    ARFit,
    AffineDemandMap,
    DUSSpec,
    SUSSpec,
    enumerate_candidates,
    extreme_total_demand,
    fit_ar,
    fit_seasonal,
    realize,
    unroll_affine,
)

__version__ = "0.1.0"

__all__ = [
    "ARFit",
    "AffineDemandMap",
    "CcgConfig",
    "CcgResult",
    "CostBreakdown",
    "CostSchedule",
    "DUSSpec",
    "EvalReport",
    "FirstStage",
    "Instance",
    "InstanceError",
    "LinearModel",
    "RecoursePlan",
    "SUSSpec",
    "SolveParams",
    "SolveResult",
    "Topology",
    "cost_breakdown",
    "dualize",
    "enumerate_candidates",
    "exact_full",
    "exact_q",
    "export_model",
    "extreme_total_demand",
    "fit_ar",
    "fit_seasonal",
    "load_instance",
    "monte_carlo_eval",
    "realize",
    "sample_trajectories",
    "save_instance",
    "solve",
    "solve_baseline",
    "solve_deterministic",
    "solve_robust",
    "solve_static_robust",
    "unroll_affine",
    "validate_recourse",
    "worst_case_recourse",
]
