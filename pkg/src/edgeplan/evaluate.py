"""Monte-Carlo out-of-sample evaluation of solved policies.

Each trajectory is priced by re-solving the policy's second stage: the full
recourse MILP for dynamic policies, the time-constant dispatch LP for the
static baseline.  Static dispatch may be short on some trajectories; unserved
requests are completed through the cloud at the on-spot price and reported
separately from the plan's own cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import models
from .decomposition import CcgResult, static_cost_split
from .instance import Instance, cost_breakdown
from .solver import SolveParams, SolverError, solve
from .uncertainty import DUSSpec, SUSSpec, realize, sample_drivers


@dataclass
class EvalReport:
    """Aggregated realized costs of one policy over sampled trajectories."""

    policy: str
    trajectories: int
    seed: int
    mean_total: float
    mean_payment: float
    mean_adjustment: float
    worst_total: float
    mean_completion: float = 0.0  # static baseline: cloud completion of unserved demand
    short_trajectories: int = 0
    samples: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "policy": self.policy,
            "trajectories": self.trajectories,
            "seed": self.seed,
            "mean_total": self.mean_total,
            "mean_payment": self.mean_payment,
            "mean_adjustment": self.mean_adjustment,
            "worst_total": self.worst_total,
            "mean_completion": self.mean_completion,
            "short_trajectories": self.short_trajectories,
            "samples": self.samples,
        }


def sample_trajectories(
    spec: SUSSpec | DUSSpec, forecast: np.ndarray, n: int, seed: int
) -> list[np.ndarray]:
    """In-set demand trajectories from continuous driver draws."""
    forecast = np.asarray(forecast, dtype=float)
    I, T = forecast.shape
    drivers = sample_drivers(I, T, spec.budget, n, seed)
    return [realize(spec, forecast, g, vertex=False) for g in drivers]


def monte_carlo_eval(
    inst: Instance,
    result: CcgResult,
    trajectories: list[np.ndarray],
    params: SolveParams | None = None,
    seed: int = 0,
) -> EvalReport:
    """Realized-cost distribution of a solved policy over given trajectories."""
    params = params or SolveParams()
    I, T = inst.ap_count, inst.horizon
    for lam in trajectories:
        if np.asarray(lam).shape != (I, T):
            raise ValueError(f"trajectory must be ({I}, {T}), got {np.asarray(lam).shape}")
    if result.label == "saro":
        return _eval_static(inst, result, trajectories, params, seed)
    return _eval_dynamic(inst, result, trajectories, params, seed)


def _eval_dynamic(inst, result, trajectories, params, seed) -> EvalReport:
    if result.first_stage is None:
        raise ValueError(f"result {result.label!r} carries no first stage to evaluate")
    fs = result.first_stage
    samples = []
    for lam in trajectories:
        model, vmap = models.build_recourse_milp(inst, fs, np.asarray(lam, dtype=float))
        res = solve(model, params)
        if not res.is_optimal:
            raise SolverError(f"evaluation recourse failed: {res.status} {res.message}")
        plan = models.extract_plan(vmap, res.values, inst)
        samples.append(cost_breakdown(inst, fs, plan).as_dict())
    return _aggregate(result.label, samples, len(trajectories), seed)


def _eval_static(inst, result, trajectories, params, seed) -> EvalReport:
    if result.first_stage is None or result.static_placement is None:
        raise ValueError("static result carries no placement/first stage to evaluate")
    I, J, T = inst.dims
    fs = result.first_stage
    z = result.static_placement
    # completion: route to cloud and buy the resources on the spot
    completion_price = models.demand_dual_bound(inst)
    samples = []
    short = 0
    for lam in trajectories:
        lp, vmap = models.build_static_recourse_lp(
            inst, z, fs.s_edge[:, 0], float(fs.s_cloud[0]), np.asarray(lam, dtype=float), completion_price
        )
        res = solve(lp, params)
        if not res.is_optimal:
            raise SolverError(f"static evaluation dispatch failed: {res.status} {res.message}")
        overflow = vmap.array(res.values, "o", (I, T))
        completion = float(np.sum(completion_price * overflow))
        split = static_cost_split(
            inst, z, fs, vmap.array(res.values, "xe", (I, J)), vmap.array(res.values, "xc", (I,))
        ).as_dict()
        split["completion"] = completion
        split["total"] += completion
        if overflow.sum() > 1e-6:
            short += 1
        samples.append(split)
    report = _aggregate(result.label, samples, len(trajectories), seed)
    report.short_trajectories = short
    report.mean_completion = float(np.mean([s.get("completion", 0.0) for s in samples])) if samples else 0.0
    return report


def _aggregate(policy: str, samples: list[dict], n: int, seed: int) -> EvalReport:
    totals = [s["total"] for s in samples]
    payments = [
        s["c1_reserve"] + s["c2_adjust"] + s["c3_install"] + s["c4_download"] + s["c5_storage"]
        for s in samples
    ]
    adjustments = [s["c2_adjust"] for s in samples]
    return EvalReport(
        policy=policy,
        trajectories=n,
        seed=seed,
        mean_total=float(np.mean(totals)) if totals else 0.0,
        mean_payment=float(np.mean(payments)) if payments else 0.0,
        mean_adjustment=float(np.mean(adjustments)) if adjustments else 0.0,
        worst_total=float(np.max(totals)) if totals else 0.0,
        samples=samples,
    )
