"""Nested column-and-constraint generation for the robust placement problem.

The outer loop alternates between a scenario master (first-stage sizing
against a growing pool of demand realizations) and a worst-case search at the
incumbent first stage.  Because the recourse contains binaries, the worst
case is itself computed by an inner loop that alternates between the recourse
MILP at a fixed demand (lower bound, new discrete point) and a dualized
worst-demand MILP over the accumulated discrete points (upper bound, new
demand).  Both loops terminate in finitely many steps: a repeated demand
scenario (outer) or repeated driver (inner) closes the bounds.

Also hosts the deterministic and static-robust baselines so every solver
reports through the same :class:`CcgResult` schema.
"""

from __future__ import annotations

import hashlib
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import models
from .instance import CostBreakdown, FirstStage, Instance, cost_breakdown
from .solver import LinearModel, SolveParams, SolverError, dualize, solve
from .uncertainty import (
    AffineDemandMap,
    DUSSpec,
    SUSSpec,
    extreme_total_demand,
    realize,
    unroll_affine,
)

log = logging.getLogger(__name__)

BASELINES = ("det", "saro", "daro_sus", "daro_dus")


@dataclass(frozen=True)
class CcgConfig:
    """Gaps are relative: (UB - LB) / max(|UB|, 1e-12)."""

    eps_outer: float = 1e-3
    eps_inner: float = 1e-3
    max_outer: int = 50
    max_inner: int = 50
    solver: SolveParams = field(default_factory=SolveParams)

    def __post_init__(self):
        if self.eps_outer <= 0 or self.eps_inner <= 0:
            raise ValueError("gap tolerances must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration caps must be >= 1")


def rel_gap(lb: float, ub: float) -> float:
    if math.isinf(ub) or math.isinf(lb):
        return math.inf
    return (ub - lb) / max(abs(ub), 1e-12)


def _digest(g: np.ndarray) -> str:
    return hashlib.sha1(np.asarray(g, dtype=np.int8).tobytes()).hexdigest()[:12]


def reserve_cost(inst: Instance, fs: FirstStage) -> float:
    c = inst.costs
    return c.slot_length * (
        float(np.sum(c.reserve_price_edge * fs.s_edge))
        + float(np.dot(c.reserve_price_cloud, fs.s_cloud))
    )


@dataclass
class InnerResult:
    """Converged worst-case search at one fixed first stage."""

    driver: np.ndarray
    demand: np.ndarray
    value: float  # upper bound on the true worst-case recourse value
    lower_bound: float
    cuts: list[models.CutPoint]
    bounds: list[tuple[float, float]]
    iterations: int
    converged: bool
    notes: list[str] = field(default_factory=list)


@dataclass
class CcgResult:
    """Shared report schema for the robust solver and all baselines."""

    label: str
    status: str  # converged | iteration_cap
    objective: float
    lower_bound: float
    upper_bound: float
    first_stage: FirstStage | None
    pool: list[tuple[np.ndarray, np.ndarray]]  # (driver, demand) pairs
    outer_bounds: list[tuple[float, float]]
    inner_traces: list[list[tuple[float, float]]]
    outer_iterations: int
    inner_iterations: int
    wall_time_s: float
    breakdown: CostBreakdown | None
    iteration_log: list[dict]
    notes: list[str] = field(default_factory=list)
    static_placement: np.ndarray | None = None  # static baseline: z per node
    cut_pools: list[list[dict]] = field(default_factory=list)  # binaries per inner run

    @property
    def gap(self) -> float:
        return rel_gap(self.lower_bound, self.upper_bound)

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "status": self.status,
            "objective": self.objective,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "gap": self.gap,
            "first_stage": None
            if self.first_stage is None
            else {
                "s_edge": self.first_stage.s_edge.tolist(),
                "s_cloud": self.first_stage.s_cloud.tolist(),
            },
            "static_placement": None
            if self.static_placement is None
            else self.static_placement.tolist(),
            "pool": [
                {"driver": g.tolist(), "demand": lam.tolist()} for g, lam in self.pool
            ],
            "outer_bounds": self.outer_bounds,
            "inner_traces": self.inner_traces,
            "outer_iterations": self.outer_iterations,
            "inner_iterations": self.inner_iterations,
            "wall_time_s": self.wall_time_s,
            "breakdown": None if self.breakdown is None else self.breakdown.as_dict(),
            "notes": self.notes,
            "iteration_log": self.iteration_log,
            "cut_pools": self.cut_pools,
        }

    @staticmethod
    def from_json(doc: dict) -> "CcgResult":
        fs = doc.get("first_stage")
        br = doc.get("breakdown")
        return CcgResult(
            label=doc["label"],
            status=doc["status"],
            objective=doc["objective"],
            lower_bound=doc["lower_bound"],
            upper_bound=doc["upper_bound"],
            first_stage=None
            if fs is None
            else FirstStage(np.asarray(fs["s_edge"]), np.asarray(fs["s_cloud"])),
            pool=[
                (np.asarray(p["driver"]), np.asarray(p["demand"])) for p in doc.get("pool", [])
            ],
            outer_bounds=[tuple(b) for b in doc.get("outer_bounds", [])],
            inner_traces=[[tuple(b) for b in tr] for tr in doc.get("inner_traces", [])],
            outer_iterations=doc.get("outer_iterations", 0),
            inner_iterations=doc.get("inner_iterations", 0),
            wall_time_s=doc.get("wall_time_s", 0.0),
            breakdown=None if br is None else CostBreakdown(**br),
            iteration_log=doc.get("iteration_log", []),
            notes=list(doc.get("notes", [])),
            static_placement=None
            if doc.get("static_placement") is None
            else np.asarray(doc["static_placement"]),
        )


def worst_case_recourse(
    inst: Instance,
    fs: FirstStage,
    spec: SUSSpec | DUSSpec,
    cfg: CcgConfig | None = None,
    dmap: AffineDemandMap | None = None,
    initial_demand: np.ndarray | None = None,
    iteration_log: list[dict] | None = None,
) -> InnerResult:
    """Worst-case recourse value at a fixed first stage (inner loop).

    Alternates the recourse MILP at the incumbent demand (raises the lower
    bound and contributes a new discrete cut point) with the dualized
    worst-demand MILP over all cut points (lowers the upper bound and emits
    the next demand).  The returned ``value`` is the final upper bound, which
    is always a valid bound on the true worst case, so outer bounds derived
    from it stay conservative even on early exit.
    """
    cfg = cfg or CcgConfig()
    if dmap is None:
        dmap = unroll_affine(spec, inst.forecast)
    if initial_demand is None:
        _, initial_demand = extreme_total_demand(spec, inst.forecast)
    lam_cur = initial_demand
    lb, ub = -math.inf, math.inf
    cuts: list[models.CutPoint] = []
    seen_cuts: set[bytes] = set()
    seen_drivers: set[bytes] = set()
    bounds: list[tuple[float, float]] = []
    notes: list[str] = []
    driver = np.zeros(dmap.dims)
    converged = False

    for r in range(cfg.max_inner):
        t0 = time.perf_counter()
        sp_model, sp_vmap = models.build_recourse_milp(inst, fs, lam_cur)
        sp = solve(sp_model, cfg.solver)
        if not sp.is_optimal:
            raise SolverError(f"recourse MILP failed at inner iteration {r}: {sp.status} {sp.message}")
        lb = max(lb, sp.objective)
        bins = models.extract_binaries(sp_vmap, sp.values, inst)
        key = bins.digest()
        if key not in seen_cuts:
            seen_cuts.add(key)
            cuts.append(models.make_cut(inst, fs, bins, lam_cur))

        mp_model, mp_vmap = models.build_worst_case_milp(inst, cuts, dmap, spec.budget)
        mp = solve(mp_model, cfg.solver)
        if not mp.is_optimal:
            raise SolverError(f"worst-demand MILP failed at inner iteration {r}: {mp.status} {mp.message}")
        ub = min(ub, mp.objective)
        driver = models.extract_driver(mp_vmap, mp.values, *dmap.dims)
        lam_cur = realize(spec, inst.forecast, driver)
        bounds.append((lb, ub))
        if iteration_log is not None:
            iteration_log.append(
                {
                    "level": "inner",
                    "r": r,
                    "LB": lb,
                    "UB": ub,
                    "gap": rel_gap(lb, ub),
                    "wall_ms": 1e3 * (time.perf_counter() - t0),
                    "scenario_digest": _digest(driver),
                }
            )
        if rel_gap(lb, ub) <= cfg.eps_inner:
            converged = True
            break
        gkey = driver.astype(np.int8).tobytes()
        if gkey in seen_drivers:
            converged = True
            notes.append(
                f"inner driver repeated at iteration {r}; bounds declared closed "
                f"(residual gap {rel_gap(lb, ub):.2e})"
            )
            break
        seen_drivers.add(gkey)
    else:
        notes.append(f"inner iteration cap {cfg.max_inner} reached (gap {rel_gap(lb, ub):.2e})")

    return InnerResult(driver, lam_cur, ub, lb, cuts, bounds, len(bounds), converged, notes)


def solve_robust(
    inst: Instance,
    spec: SUSSpec | DUSSpec | None = None,
    cfg: CcgConfig | None = None,
    label: str = "robust",
) -> CcgResult:
    """Two-stage robust optimum under vertex-driver semantics (outer loop).

    The scenario pool starts from the total-demand-maximizing realization;
    each outer iteration re-sizes the first stage against the pool (lower
    bound), prices the incumbent against its worst case (upper bound), and
    appends the newly found realization.  A repeated realization closes the
    bounds by the finite-convergence argument and is declared convergence
    even if the numeric gap is above tolerance (with a diagnostic note).
    """
    cfg = cfg or CcgConfig()
    spec = spec if spec is not None else inst.uncertainty
    if spec.clip_negative:
        raise ValueError("exact decomposition requires clip_negative=False on the uncertainty spec")
    start = time.perf_counter()
    dmap = unroll_affine(spec, inst.forecast)
    g1, lam1 = extreme_total_demand(spec, inst.forecast)
    pool: list[tuple[np.ndarray, np.ndarray]] = [(g1, lam1)]
    seen = {g1.astype(np.int8).tobytes()}
    lb, ub = -math.inf, math.inf
    best_fs: FirstStage | None = None
    outer_bounds: list[tuple[float, float]] = []
    inner_traces: list[list[tuple[float, float]]] = []
    iteration_log: list[dict] = []
    notes: list[str] = []
    inner_total = 0
    status = "iteration_cap"

    for k in range(cfg.max_outer):
        t0 = time.perf_counter()
        master, mvmap = models.build_master(inst, [lam for _, lam in pool])
        res = solve(master, cfg.solver)
        if not res.is_optimal:
            raise SolverError(f"master failed at outer iteration {k}: {res.status} {res.message}")
        lb = max(lb, res.objective)
        fs = models.extract_first_stage(mvmap, res.values, inst)

        inner = worst_case_recourse(
            inst, fs, spec, cfg, dmap=dmap, initial_demand=pool[-1][1], iteration_log=iteration_log
        )
        inner_traces.append(inner.bounds)
        inner_total += inner.iterations
        notes.extend(inner.notes)
        candidate_ub = reserve_cost(inst, fs) + inner.value
        if candidate_ub < ub:
            ub = candidate_ub
            best_fs = fs
        outer_bounds.append((lb, ub))
        iteration_log.append(
            {
                "level": "outer",
                "k": k,
                "LB": lb,
                "UB": ub,
                "gap": rel_gap(lb, ub),
                "wall_ms": 1e3 * (time.perf_counter() - t0),
                "scenario_digest": _digest(inner.driver),
            }
        )
        log.info("outer %d: LB=%.6g UB=%.6g gap=%.3e", k, lb, ub, rel_gap(lb, ub))
        if rel_gap(lb, ub) <= cfg.eps_outer:
            status = "converged"
            break
        gkey = inner.driver.astype(np.int8).tobytes()
        if gkey in seen:
            status = "converged"
            notes.append(
                f"worst-case scenario repeated at outer iteration {k}; convergence declared "
                f"(residual gap {rel_gap(lb, ub):.2e})"
            )
            break
        seen.add(gkey)
        pool.append((inner.driver, inner.demand))

    breakdown = None
    if best_fs is not None:
        breakdown = _worst_pool_breakdown(inst, best_fs, pool, cfg.solver)
    return CcgResult(
        label=label,
        status=status,
        objective=ub,
        lower_bound=lb,
        upper_bound=ub,
        first_stage=best_fs,
        pool=pool,
        outer_bounds=outer_bounds,
        inner_traces=inner_traces,
        outer_iterations=len(outer_bounds),
        inner_iterations=inner_total,
        wall_time_s=time.perf_counter() - start,
        breakdown=breakdown,
        iteration_log=iteration_log,
        notes=notes,
    )


def _worst_pool_breakdown(
    inst: Instance, fs: FirstStage, pool, params: SolveParams
) -> CostBreakdown:
    """Cost split of the recourse against the worst scenario in the pool."""
    worst = None
    for _, lam in pool:
        model, vmap = models.build_recourse_milp(inst, fs, lam)
        res = solve(model, params)
        if not res.is_optimal:
            continue
        if worst is None or res.objective > worst[0]:
            worst = (res.objective, vmap, res.values)
    if worst is None:
        raise SolverError("no pool scenario could be re-solved for the cost breakdown")
    plan = models.extract_plan(worst[1], worst[2], inst)
    return cost_breakdown(inst, fs, plan)


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


def solve_deterministic(inst: Instance, cfg: CcgConfig | None = None) -> CcgResult:
    """Forecast-only plan: no uncertainty, single joint MILP."""
    cfg = cfg or CcgConfig()
    start = time.perf_counter()
    model, vmap = models.build_deterministic(inst, inst.forecast)
    res = solve(model, cfg.solver)
    if not res.is_optimal:
        raise SolverError(f"deterministic solve failed: {res.status} {res.message}")
    fs = models.extract_first_stage(vmap, res.values, inst)
    plan = models.extract_plan(vmap, res.values, inst)
    I, T = inst.ap_count, inst.horizon
    return CcgResult(
        label="det",
        status="converged",
        objective=res.objective,
        lower_bound=res.objective,
        upper_bound=res.objective,
        first_stage=fs,
        pool=[(np.zeros((I, T)), np.asarray(inst.forecast, dtype=float))],
        outer_bounds=[(res.objective, res.objective)],
        inner_traces=[],
        outer_iterations=1,
        inner_iterations=0,
        wall_time_s=time.perf_counter() - start,
        breakdown=cost_breakdown(inst, fs, plan),
        iteration_log=[],
    )


def solve_static_robust(
    inst: Instance, spec: SUSSpec | None = None, cfg: CcgConfig | None = None
) -> CcgResult:
    """Static baseline: placement, sizing, and allocation fixed over time.

    Classic two-stage CCG with continuous recourse: the subproblem dualizes
    the time-constant dispatch LP at the incumbent (z, s) and searches the
    worst drivers in one MILP.  Scenarios whose dispatch needs the completion
    slack mark the incumbent infeasible-for-that-demand: they enter the pool
    but do not update the upper bound.
    """
    cfg = cfg or CcgConfig()
    spec = spec if spec is not None else inst.uncertainty
    if not isinstance(spec, SUSSpec):
        raise ValueError("the static baseline is defined for static (per-period) uncertainty only")
    start = time.perf_counter()
    I, J, T = inst.dims
    c = inst.costs
    dmap = unroll_affine(spec, inst.forecast)
    penalty = models.static_penalty(inst)
    sigma_ub = np.full((I, T), penalty)
    g1, lam1 = extreme_total_demand(spec, inst.forecast)
    pool = [(g1, lam1)]
    seen = {g1.astype(np.int8).tobytes()}
    lb, ub = -math.inf, math.inf
    best: tuple[FirstStage, np.ndarray] | None = None
    outer_bounds: list[tuple[float, float]] = []
    iteration_log: list[dict] = []
    notes: list[str] = []
    status = "iteration_cap"

    for k in range(cfg.max_outer):
        t0 = time.perf_counter()
        master, mvmap = models.build_static_master(inst, [lam for _, lam in pool])
        res = solve(master, cfg.solver)
        if not res.is_optimal:
            raise SolverError(f"static master failed at iteration {k}: {res.status} {res.message}")
        lb = max(lb, res.objective)
        z = mvmap.array(res.values, "z", (J,))
        s_edge = mvmap.array(res.values, "s", (J,))
        s_cloud = mvmap.scalar(res.values, "s0")
        first_stage_cost = res.objective - mvmap.scalar(res.values, "eta")

        lp, _ = models.build_static_recourse_lp(inst, z, s_edge, s_cloud, inst.forecast, penalty)
        wc = LinearModel("static_worst", sense="max")
        wvmap = models.VarMap()
        models.add_driver_vars(wc, wvmap, I, T, spec.budget)
        expr, const = models.add_dual_cut_expr(wc, wvmap, 0, dualize(lp), dmap, sigma_ub)
        wc.add_obj(expr)
        wc.offset = const
        sub = solve(wc, cfg.solver)
        if not sub.is_optimal:
            raise SolverError(f"static worst-case search failed at iteration {k}: {sub.status}")
        driver = models.extract_driver(wvmap, sub.values, I, T)
        lam_star = realize(spec, inst.forecast, driver)

        check_lp, cvmap = models.build_static_recourse_lp(inst, z, s_edge, s_cloud, lam_star, penalty)
        check = solve(check_lp, cfg.solver)
        overflow = float(cvmap.array(check.values, "o", (I, T)).sum()) if check.is_optimal else math.inf
        if overflow <= 1e-6:
            candidate = first_stage_cost + sub.objective
            if candidate < ub:
                ub = candidate
                best = (
                    FirstStage(np.repeat(s_edge[:, None], T, axis=1), np.full(T, s_cloud)),
                    z,
                )
        else:
            notes.append(
                f"iteration {k}: incumbent static plan cannot serve scenario "
                f"{_digest(driver)} ({overflow:.3g} requests short); scenario pooled"
            )
        outer_bounds.append((lb, ub))
        iteration_log.append(
            {
                "level": "outer",
                "k": k,
                "LB": lb,
                "UB": ub,
                "gap": rel_gap(lb, ub),
                "wall_ms": 1e3 * (time.perf_counter() - t0),
                "scenario_digest": _digest(driver),
            }
        )
        if rel_gap(lb, ub) <= cfg.eps_outer:
            status = "converged"
            break
        gkey = driver.astype(np.int8).tobytes()
        if gkey in seen:
            status = "converged"
            notes.append(f"static scenario repeated at iteration {k}; convergence declared")
            break
        seen.add(gkey)
        pool.append((driver, lam_star))

    breakdown = None
    fs = None
    placement = None
    if best is not None:
        fs, placement = best
        breakdown = _static_breakdown(inst, placement, fs, pool, penalty, cfg.solver)
    return CcgResult(
        label="saro",
        status=status,
        objective=ub,
        lower_bound=lb,
        upper_bound=ub,
        first_stage=fs,
        pool=pool,
        outer_bounds=outer_bounds,
        inner_traces=[],
        outer_iterations=len(outer_bounds),
        inner_iterations=0,
        wall_time_s=time.perf_counter() - start,
        breakdown=breakdown,
        iteration_log=iteration_log,
        notes=notes,
        static_placement=placement,
    )


def static_cost_split(
    inst: Instance,
    placement: np.ndarray,
    fs: FirstStage,
    alloc_edge: np.ndarray,
    alloc_cloud: np.ndarray,
) -> CostBreakdown:
    """Cost split of a static plan with time-constant allocation (I, J)/(I,)."""
    c = inst.costs
    T = inst.horizon
    fresh = placement * (1.0 - c.initial_placement)
    c1 = reserve_cost(inst, fs)
    c3 = float(np.sum(c.install_cost[:, 0] * fresh))
    c4 = float(np.sum(c.download_cloud[:, 0] * fresh))
    c5 = float(np.sum(c.storage_cost * placement[:, None]))
    c6 = c.delay_penalty * T * (
        float(np.dot(inst.topology.delay_cloud, alloc_cloud))
        + float(np.sum(inst.topology.delay_edge * alloc_edge))
    )
    c7 = c.bandwidth_unit * c.request_size * T * (
        float(np.dot(inst.topology.hops_cloud, alloc_cloud))
        + float(np.sum(inst.topology.hops_edge * alloc_edge))
    )
    return CostBreakdown(c1, 0.0, c3, c4, c5, c6, c7, c1 + c3 + c4 + c5 + c6 + c7)


def _static_breakdown(inst, placement, fs, pool, penalty, params) -> CostBreakdown:
    I, J, T = inst.dims
    worst = None
    for _, lam in pool:
        lp, vmap = models.build_static_recourse_lp(
            inst, placement, fs.s_edge[:, 0], float(fs.s_cloud[0]), lam, penalty
        )
        res = solve(lp, params)
        if res.is_optimal and (worst is None or res.objective > worst[0]):
            worst = (res.objective, vmap, res.values)
    if worst is None:
        raise SolverError("no pool scenario could be re-dispatched for the static cost split")
    _, vmap, values = worst
    return static_cost_split(
        inst,
        placement,
        fs,
        vmap.array(values, "xe", (I, J)),
        vmap.array(values, "xc", (I,)),
    )


def solve_baseline(
    inst: Instance,
    which: str,
    spec: SUSSpec | DUSSpec | None = None,
    cfg: CcgConfig | None = None,
) -> CcgResult:
    """Uniform entry point: det | saro | daro_sus | daro_dus."""
    which = which.replace("-", "_")
    spec = spec if spec is not None else inst.uncertainty
    if which == "det":
        return solve_deterministic(inst, cfg)
    if which == "saro":
        return solve_static_robust(inst, spec, cfg)
    if which == "daro_sus":
        if not isinstance(spec, SUSSpec):
            raise ValueError("daro_sus needs a static uncertainty spec")
        return solve_robust(inst, spec, cfg, label="daro_sus")
    if which == "daro_dus":
        if not isinstance(spec, DUSSpec):
            raise ValueError("daro_dus needs a dynamic uncertainty spec")
        return solve_robust(inst, spec, cfg, label="daro_dus")
    raise ValueError(f"unknown baseline {which!r}; expected one of {BASELINES}")
