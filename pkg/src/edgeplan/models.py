"""Builders for every optimization model used by the planner.

Each builder returns a :class:`~edgeplan.solver.LinearModel` plus a
:class:`VarMap` resolving semantic indices to variable names.  The recourse
feasible set (placement, downloads, allocation, buy/sell adjustment) is
emitted by one shared block routine so the deterministic model, the scenario
master, and the fixed-first-stage recourse MILP cannot drift apart.

The worst-case search MILP is assembled from the *symbolic dual* of the
continuous recourse LP at fixed binaries (strong duality collapses the inner
minimization), with demand composed through an affine driver map and every
product of a bounded demand dual with a binary driver linearized exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import solver as sv
from .instance import FirstStage, Instance, RecoursePlan
from .solver import EQUAL, GREATER, INF, LESS, DualModel, LinearModel, dualize
from .uncertainty import AffineDemandMap, DUSSpec, SUSSpec


class VarMap:
    """Bijection between semantic indices ``(kind, idx, tag)`` and var names."""

    def __init__(self) -> None:
        self._by_key: dict[tuple, str] = {}
        self._by_name: dict[str, tuple] = {}

    @staticmethod
    def format(kind: str, idx: tuple[int, ...], tag: str = "") -> str:
        if not idx:
            return f"{kind}{tag}"
        return f"{kind}{tag}[{','.join(str(k) for k in idx)}]"

    def add(self, kind: str, idx: tuple[int, ...], tag: str = "") -> str:
        key = (kind, idx, tag)
        name = self.format(kind, idx, tag)
        if key in self._by_key:
            raise KeyError(f"duplicate semantic index {key}")
        self._by_key[key] = name
        self._by_name[name] = key
        return name

    def name(self, kind: str, *idx: int, tag: str = "") -> str:
        return self._by_key[(kind, idx, tag)]

    def key(self, name: str) -> tuple:
        return self._by_name[name]

    def array(self, values: dict[str, float], kind: str, shape: tuple[int, ...], tag: str = "") -> np.ndarray:
        out = np.zeros(shape)
        for idx in np.ndindex(*shape):
            out[idx] = values[self._by_key[(kind, idx, tag)]]
        return out

    def scalar(self, values: dict[str, float], kind: str, tag: str = "") -> float:
        return values[self._by_key[(kind, (), tag)]]


@dataclass(frozen=True)
class FixedBinaries:
    """One discrete recourse point: placement, startup, and download choices."""

    z: np.ndarray  # (J, T)
    u: np.ndarray  # (J, T)
    q: np.ndarray  # (J, J, T), [m][j][t], diagonal zero
    q0: np.ndarray  # (J, T)

    def __post_init__(self):
        for name in ("z", "u", "q", "q0"):
            a = np.asarray(getattr(self, name), dtype=float).round().copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def digest(self) -> bytes:
        return b"".join(
            np.asarray(getattr(self, n), dtype=np.int8).tobytes() for n in ("z", "u", "q", "q0")
        )

    def check(self, inst: Instance) -> list[str]:
        """Placement/download logic at these binaries given the initial state."""
        out = []
        z0 = inst.costs.initial_placement
        z_prev = np.concatenate([z0[:, None], self.z[:, :-1]], axis=1)
        off = ~np.eye(self.z.shape[0], dtype=bool)
        q_masked = np.where(off[:, :, None], self.q, 0.0)
        if (q_masked.sum(axis=1) > z_prev + 1e-9).any():
            out.append("a node exports the service without holding it previously")
        if (q_masked.sum(axis=0) + self.q0 < self.z - z_prev - 1e-9).any():
            out.append("a newly placed service has no download source")
        if (self.u < self.z - z_prev - 1e-9).any():
            out.append("startup indicator below placement increase")
        return out


def canonical_binaries(inst: Instance, z: np.ndarray, q: np.ndarray, q0: np.ndarray) -> FixedBinaries:
    """Recompute the startup indicator as ``max(0, z_t - z_{t-1})``."""
    z0 = inst.costs.initial_placement
    z_prev = np.concatenate([z0[:, None], z[:, :-1]], axis=1)
    return FixedBinaries(z=z, u=np.maximum(0.0, z - z_prev), q=q, q0=q0)


def fixed_binary_cost(inst: Instance, bins: FixedBinaries) -> float:
    """Install + download + storage cost locked in by discrete choices."""
    c = inst.costs
    off = ~np.eye(inst.en_count, dtype=bool)
    return (
        float(np.sum(c.install_cost * bins.u))
        + float(np.sum(c.download_en[off] * bins.q[off]))
        + float(np.sum(c.download_cloud * bins.q0))
        + float(np.sum(c.storage_cost * bins.z))
    )


# ---------------------------------------------------------------------------
# Shared recourse block
# ---------------------------------------------------------------------------


def _second_stage_obj(inst: Instance, vmap: VarMap, tag: str) -> dict[str, float]:
    I, J, T = inst.dims
    c = inst.costs
    d = c.slot_length
    ce = inst.route_cost_edge()
    cc = inst.route_cost_cloud()
    obj: dict[str, float] = {}
    for j in range(J):
        for t in range(T):
            obj[vmap.name("u", j, t, tag=tag)] = c.install_cost[j, t]
            obj[vmap.name("z", j, t, tag=tag)] = c.storage_cost[j, t]
            obj[vmap.name("q0", j, t, tag=tag)] = c.download_cloud[j, t]
            obj[vmap.name("yB", j, t, tag=tag)] = d * c.buy_price_edge[j, t]
            obj[vmap.name("yS", j, t, tag=tag)] = -d * c.sell_price_edge[j, t]
            for m in range(J):
                if m != j:
                    obj[vmap.name("q", m, j, t, tag=tag)] = c.download_en[m, j, t]
    for t in range(T):
        obj[vmap.name("yB0", t, tag=tag)] = d * c.buy_price_cloud[t]
        obj[vmap.name("yS0", t, tag=tag)] = -d * c.sell_price_cloud[t]
    for i in range(I):
        for t in range(T):
            obj[vmap.name("x0", i, t, tag=tag)] = cc[i]
            for j in range(J):
                obj[vmap.name("x", i, j, t, tag=tag)] = ce[i, j]
    return obj


def _recourse_block(
    m: LinearModel,
    vmap: VarMap,
    inst: Instance,
    lam: np.ndarray,
    tag: str,
    fixed_first_stage: tuple[np.ndarray, np.ndarray] | None,
) -> dict[str, float]:
    """Add one full recourse copy; returns its second-stage cost expression.

    When ``fixed_first_stage`` is None the first-stage names ``s``/``s0`` must
    have been declared already (scenario master / deterministic model);
    otherwise it carries fixed ``(s_edge, s_cloud)`` arrays baked into the RHS.
    """
    I, J, T = inst.dims
    c = inst.costs
    w = c.resource_per_request
    z0 = c.initial_placement
    fixed = fixed_first_stage is not None
    s_fix, s0_fix = fixed_first_stage if fixed else (None, None)

    for j in range(J):
        for t in range(T):
            m.add_var(vmap.add("z", (j, t), tag), 0.0, 1.0, integer=True)
            m.add_var(vmap.add("u", (j, t), tag), 0.0, 1.0, integer=True)
            m.add_var(vmap.add("q0", (j, t), tag), 0.0, 1.0, integer=True)
            m.add_var(vmap.add("yB", (j, t), tag))
            m.add_var(vmap.add("yS", (j, t), tag))
            for mm in range(J):
                if mm != j:
                    m.add_var(vmap.add("q", (mm, j, t), tag), 0.0, 1.0, integer=True)
    for t in range(T):
        m.add_var(vmap.add("yB0", (t,), tag))
        m.add_var(vmap.add("yS0", (t,), tag))
    for i in range(I):
        for t in range(T):
            m.add_var(vmap.add("x0", (i, t), tag))
            for j in range(J):
                m.add_var(vmap.add("x", (i, j, t), tag))

    V = vmap.name
    for i in range(I):
        for t in range(T):
            coeffs = {V("x0", i, t, tag=tag): 1.0}
            for j in range(J):
                coeffs[V("x", i, j, t, tag=tag)] = 1.0
            m.add_constr(f"cover{tag}[{i},{t}]", coeffs, GREATER, float(lam[i, t]))
    for j in range(J):
        for t in range(T):
            cap = {
                V("yB", j, t, tag=tag): 1.0,
                V("yS", j, t, tag=tag): -1.0,
                V("z", j, t, tag=tag): -c.capacity[j],
            }
            bal = {V("x", i, j, t, tag=tag): w for i in range(I)}
            bal[V("yB", j, t, tag=tag)] = -1.0
            bal[V("yS", j, t, tag=tag)] = 1.0
            sell = {V("yS", j, t, tag=tag): 1.0}
            if fixed:
                m.add_constr(f"cap{tag}[{j},{t}]", cap, LESS, -float(s_fix[j, t]))
                m.add_constr(f"ebal{tag}[{j},{t}]", bal, LESS, float(s_fix[j, t]))
                m.add_constr(f"sellE{tag}[{j},{t}]", sell, LESS, float(s_fix[j, t]))
            else:
                cap[V("s", j, t)] = 1.0
                bal[V("s", j, t)] = -1.0
                sell[V("s", j, t)] = -1.0
                m.add_constr(f"cap{tag}[{j},{t}]", cap, LESS, 0.0)
                m.add_constr(f"ebal{tag}[{j},{t}]", bal, LESS, 0.0)
                m.add_constr(f"sellE{tag}[{j},{t}]", sell, LESS, 0.0)
    for t in range(T):
        cbal = {V("x0", i, t, tag=tag): w for i in range(I)}
        cbal[V("yB0", t, tag=tag)] = -1.0
        cbal[V("yS0", t, tag=tag)] = 1.0
        sell = {V("yS0", t, tag=tag): 1.0}
        if fixed:
            m.add_constr(f"cbal{tag}[{t}]", cbal, LESS, float(s0_fix[t]))
            m.add_constr(f"sellC{tag}[{t}]", sell, LESS, float(s0_fix[t]))
        else:
            cbal[V("s0", t)] = -1.0
            sell[V("s0", t)] = -1.0
            m.add_constr(f"cbal{tag}[{t}]", cbal, LESS, 0.0)
            m.add_constr(f"sellC{tag}[{t}]", sell, LESS, 0.0)
    for t in range(T):
        for mm in range(J):
            src = {V("q", mm, j, t, tag=tag): 1.0 for j in range(J) if j != mm}
            rhs = float(z0[mm])
            if t > 0:
                src[V("z", mm, t - 1, tag=tag)] = -1.0
                rhs = 0.0
            if src:
                m.add_constr(f"src{tag}[{mm},{t}]", src, LESS, rhs)
        for j in range(J):
            need = {V("z", j, t, tag=tag): 1.0, V("q0", j, t, tag=tag): -1.0}
            for mm in range(J):
                if mm != j:
                    need[V("q", mm, j, t, tag=tag)] = -1.0
            start = {V("z", j, t, tag=tag): 1.0, V("u", j, t, tag=tag): -1.0}
            rhs = float(z0[j])
            if t > 0:
                need[V("z", j, t - 1, tag=tag)] = -1.0
                start[V("z", j, t - 1, tag=tag)] = -1.0
                rhs = 0.0
            m.add_constr(f"need{tag}[{j},{t}]", need, LESS, rhs)
            m.add_constr(f"start{tag}[{j},{t}]", start, LESS, rhs)
    return _second_stage_obj(inst, vmap, tag)


def _first_stage_vars(m: LinearModel, vmap: VarMap, inst: Instance, in_objective: bool = True):
    J, T = inst.en_count, inst.horizon
    c = inst.costs
    d = c.slot_length
    for j in range(J):
        for t in range(T):
            obj = d * c.reserve_price_edge[j, t] if in_objective else 0.0
            m.add_var(vmap.add("s", (j, t)), 0.0, float(c.capacity[j]), obj=obj)
    for t in range(T):
        obj = d * c.reserve_price_cloud[t] if in_objective else 0.0
        m.add_var(vmap.add("s0", (t,)), 0.0, INF, obj=obj)


def extract_first_stage(vmap: VarMap, values: dict[str, float], inst: Instance) -> FirstStage:
    J, T = inst.en_count, inst.horizon
    return FirstStage(vmap.array(values, "s", (J, T)), vmap.array(values, "s0", (T,)))


def extract_plan(vmap: VarMap, values: dict[str, float], inst: Instance, tag: str = "") -> RecoursePlan:
    I, J, T = inst.dims
    q = np.zeros((J, J, T))
    for mm in range(J):
        for j in range(J):
            if mm == j:
                continue
            for t in range(T):
                q[mm, j, t] = values[vmap.name("q", mm, j, t, tag=tag)]
    return RecoursePlan(
        placement=vmap.array(values, "z", (J, T), tag),
        startup=vmap.array(values, "u", (J, T), tag),
        download_en=q,
        download_cloud=vmap.array(values, "q0", (J, T), tag),
        alloc_edge=vmap.array(values, "x", (I, J, T), tag),
        alloc_cloud=vmap.array(values, "x0", (I, T), tag),
        buy_edge=vmap.array(values, "yB", (J, T), tag),
        buy_cloud=vmap.array(values, "yB0", (T,), tag),
        sell_edge=vmap.array(values, "yS", (J, T), tag),
        sell_cloud=vmap.array(values, "yS0", (T,), tag),
    )


def extract_binaries(vmap: VarMap, values: dict[str, float], inst: Instance, tag: str = "") -> FixedBinaries:
    I, J, T = inst.dims
    q = np.zeros((J, J, T))
    for mm in range(J):
        for j in range(J):
            if mm == j:
                continue
            for t in range(T):
                q[mm, j, t] = values[vmap.name("q", mm, j, t, tag=tag)]
    z = vmap.array(values, "z", (J, T), tag)
    q0 = vmap.array(values, "q0", (J, T), tag)
    return canonical_binaries(inst, z, q, q0)


# ---------------------------------------------------------------------------
# Whole-problem models
# ---------------------------------------------------------------------------


def build_deterministic(inst: Instance, lam: np.ndarray) -> tuple[LinearModel, VarMap]:
    """Single-scenario MILP over first-stage and recourse at known demand."""
    m = LinearModel("deterministic")
    vmap = VarMap()
    _first_stage_vars(m, vmap, inst)
    m.add_obj(_recourse_block(m, vmap, inst, np.asarray(lam, dtype=float), "", None))
    return m, vmap


def build_master(inst: Instance, scenario_pool: list[np.ndarray]) -> tuple[LinearModel, VarMap]:
    """Scenario master: first stage plus one recourse copy per pool demand.

    The epigraph variable dominates every copy's second-stage cost, so the
    optimum equals ``min_s C_reserve(s) + max_pool Q_scenario(s)``.
    """
    if not scenario_pool:
        raise ValueError("scenario pool must be nonempty")
    m = LinearModel("master")
    vmap = VarMap()
    _first_stage_vars(m, vmap, inst)
    eta = m.add_var(vmap.add("eta", ()), -INF, INF, obj=1.0)
    for l, lam in enumerate(scenario_pool):
        cost = _recourse_block(m, vmap, inst, np.asarray(lam, dtype=float), f"#{l}", None)
        coeffs = dict(cost)
        coeffs[eta] = -1.0
        m.add_constr(f"epi[{l}]", coeffs, LESS, 0.0)
    return m, vmap


def build_recourse_milp(inst: Instance, fs: FirstStage, lam: np.ndarray) -> tuple[LinearModel, VarMap]:
    """Full mixed-integer recourse at fixed first stage and fixed demand."""
    m = LinearModel("recourse_milp")
    vmap = VarMap()
    m.add_obj(
        _recourse_block(m, vmap, inst, np.asarray(lam, dtype=float), "", (fs.s_edge, fs.s_cloud))
    )
    return m, vmap


def build_recourse_lp(
    inst: Instance, fs: FirstStage, bins: FixedBinaries, lam: np.ndarray
) -> tuple[LinearModel, VarMap]:
    """Continuous dispatch LP at fixed binaries.

    The objective carries adjustment plus routing cost; the install, download,
    and storage cost locked by the binaries is returned as the model's
    constant offset.  Always feasible: cloud buy-more is unbounded.
    """
    I, J, T = inst.dims
    c = inst.costs
    w = c.resource_per_request
    ce = inst.route_cost_edge()
    cc = inst.route_cost_cloud()
    lam = np.asarray(lam, dtype=float)
    problems = bins.check(inst)
    if problems:
        raise ValueError("binaries infeasible for placement logic: " + "; ".join(problems))

    m = LinearModel("recourse_lp")
    m.offset = fixed_binary_cost(inst, bins)
    vmap = VarMap()
    d = c.slot_length
    for j in range(J):
        for t in range(T):
            m.add_var(vmap.add("yB", (j, t)), obj=d * c.buy_price_edge[j, t])
            m.add_var(vmap.add("yS", (j, t)), obj=-d * c.sell_price_edge[j, t])
    for t in range(T):
        m.add_var(vmap.add("yB0", (t,)), obj=d * c.buy_price_cloud[t])
        m.add_var(vmap.add("yS0", (t,)), obj=-d * c.sell_price_cloud[t])
    for i in range(I):
        for t in range(T):
            m.add_var(vmap.add("x0", (i, t)), obj=cc[i])
            for j in range(J):
                m.add_var(vmap.add("x", (i, j, t)), obj=ce[i, j])

    V = vmap.name
    for i in range(I):
        for t in range(T):
            coeffs = {V("x0", i, t): 1.0}
            for j in range(J):
                coeffs[V("x", i, j, t)] = 1.0
            m.add_constr(f"cover[{i},{t}]", coeffs, GREATER, float(lam[i, t]))
    for j in range(J):
        for t in range(T):
            m.add_constr(
                f"cap[{j},{t}]",
                {V("yB", j, t): 1.0, V("yS", j, t): -1.0},
                LESS,
                float(c.capacity[j] * bins.z[j, t] - fs.s_edge[j, t]),
            )
            bal = {V("x", i, j, t): w for i in range(I)}
            bal[V("yB", j, t)] = -1.0
            bal[V("yS", j, t)] = 1.0
            m.add_constr(f"ebal[{j},{t}]", bal, LESS, float(fs.s_edge[j, t]))
            m.add_constr(f"sellE[{j},{t}]", {V("yS", j, t): 1.0}, LESS, float(fs.s_edge[j, t]))
    for t in range(T):
        cbal = {V("x0", i, t): w for i in range(I)}
        cbal[V("yB0", t)] = -1.0
        cbal[V("yS0", t)] = 1.0
        m.add_constr(f"cbal[{t}]", cbal, LESS, float(fs.s_cloud[t]))
        m.add_constr(f"sellC[{t}]", {V("yS0", t): 1.0}, LESS, float(fs.s_cloud[t]))
    return m, vmap


# ---------------------------------------------------------------------------
# Worst-case demand search (dualized, driver-composed, exactly linearized)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CutPoint:
    """One discrete recourse point with the dual of its dispatch LP."""

    binaries: FixedBinaries
    fixed_cost: float
    dual: DualModel


def make_cut(inst: Instance, fs: FirstStage, bins: FixedBinaries, lam: np.ndarray) -> CutPoint:
    lp, _ = build_recourse_lp(inst, fs, bins, lam)
    return CutPoint(bins, fixed_binary_cost(inst, bins), dualize(lp))


def demand_dual_bound(inst: Instance) -> np.ndarray:
    """Valid upper bound on the demand-coverage duals, per (i, t).

    One extra request can always be served at the cloud by buying resources
    on the spot, so dual feasibility caps the coverage dual at that marginal
    cost.  Used as the big-M of the driver-product linearization.
    """
    c = inst.costs
    return (
        inst.route_cost_cloud()[:, None]
        + c.resource_per_request * c.slot_length * c.buy_price_cloud[None, :]
    )


def _embed(target: LinearModel, source: LinearModel, prefix: str) -> None:
    """Copy a model's variables and constraints under a name prefix."""
    for v in source.variables:
        target.add_var(prefix + v.name, v.lb, v.ub, v.integer)
    for con in source.constraints:
        target.add_constr(
            prefix + con.name,
            {prefix + var: coef for var, coef in con.coeffs.items()},
            con.sense,
            con.rhs,
        )


def add_driver_vars(m: LinearModel, vmap: VarMap, I: int, T: int, budget: int) -> None:
    """Split binary drivers with pairing and per-period budget rows."""
    for i in range(I):
        for t in range(T):
            m.add_var(vmap.add("gp", (i, t)), 0.0, 1.0, integer=True)
            m.add_var(vmap.add("gm", (i, t)), 0.0, 1.0, integer=True)
            m.add_constr(
                f"pair[{i},{t}]",
                {vmap.name("gp", i, t): 1.0, vmap.name("gm", i, t): 1.0},
                LESS,
                1.0,
            )
    for t in range(T):
        coeffs = {}
        for i in range(I):
            coeffs[vmap.name("gp", i, t)] = 1.0
            coeffs[vmap.name("gm", i, t)] = 1.0
        m.add_constr(f"budget[{t}]", coeffs, LESS, float(budget))


def add_dual_cut_expr(
    m: LinearModel,
    vmap: VarMap,
    cut_id: int,
    dual: DualModel,
    dmap: AffineDemandMap,
    sigma_ub: np.ndarray,
) -> tuple[dict[str, float], float]:
    """Embed one dualized dispatch LP and compose its objective with drivers.

    Returns (linear expression, constant) such that, at any fixed driver
    matrix, maximizing the expression over the embedded dual variables yields
    exactly ``fixed binary cost + dispatch LP optimum`` at the realized demand
    (strong duality; the driver products are linearized exactly).
    """
    I, T = dmap.dims
    prefix = f"K{cut_id}:"
    _embed(m, dual.model, prefix)
    expr = {prefix + var: coef for var, coef in dual.model.objective.items() if coef}
    const = dual.model.offset
    for i in range(I):
        for t in range(T):
            sigma = prefix + dual.dual_of[f"cover[{i},{t}]"]
            big_m = float(sigma_ub[i, t])
            m.set_bounds(sigma, ub=big_m)
            expr[sigma] = float(dmap.offset[i, t])
            for k, tau in zip(*np.nonzero(dmap.psi[i, t])):
                coef = float(dmap.psi[i, t, k, tau])
                for sign, gkind in (("p", "gp"), ("m", "gm")):
                    zeta = m.add_var(f"z{sign}{cut_id}[{i},{t},{k},{tau}]")
                    gname = vmap.name(gkind, int(k), int(tau))
                    m.add_constr(f"z{sign}{cut_id}a[{i},{t},{k},{tau}]", {zeta: 1.0, gname: -big_m}, LESS, 0.0)
                    m.add_constr(f"z{sign}{cut_id}b[{i},{t},{k},{tau}]", {zeta: 1.0, sigma: -1.0}, LESS, 0.0)
                    m.add_constr(
                        f"z{sign}{cut_id}c[{i},{t},{k},{tau}]",
                        {zeta: 1.0, sigma: -1.0, gname: -big_m},
                        GREATER,
                        -big_m,
                    )
                    expr[zeta] = expr.get(zeta, 0.0) + (coef if sign == "p" else -coef)
    return expr, const


def build_worst_case_milp(
    inst: Instance,
    cuts: list[CutPoint],
    dmap: AffineDemandMap,
    budget: int,
) -> tuple[LinearModel, VarMap]:
    """Worst-demand search over drivers against a set of recourse cut points.

    Maximizes an epigraph bounded above, per cut, by the composed dual
    expression; the optimum is the exact worst case of the recourse value
    restricted to the cut points' binaries.
    """
    if not cuts:
        raise ValueError("need at least one cut point")
    I, T = dmap.dims
    m = LinearModel("worst_case", sense="max")
    vmap = VarMap()
    tau = m.add_var(vmap.add("tau", ()), -INF, INF, obj=1.0)
    add_driver_vars(m, vmap, I, T, budget)
    sigma_ub = demand_dual_bound(inst)
    for n, cut in enumerate(cuts):
        expr, const = add_dual_cut_expr(m, vmap, n, cut.dual, dmap, sigma_ub)
        coeffs = {var: -coef for var, coef in expr.items()}
        coeffs[tau] = 1.0
        m.add_constr(f"cut[{n}]", coeffs, LESS, const)
    return m, vmap


def extract_driver(vmap: VarMap, values: dict[str, float], I: int, T: int) -> np.ndarray:
    return vmap.array(values, "gp", (I, T)) - vmap.array(values, "gm", (I, T))


def build_peak_demand_milp(
    spec: SUSSpec | DUSSpec, forecast: np.ndarray
) -> tuple[LinearModel, VarMap]:
    """Total-demand maximization with the deviation recursion as equalities."""
    forecast = np.asarray(forecast, dtype=float)
    I, T = forecast.shape
    m = LinearModel("peak_demand", sense="max")
    vmap = VarMap()
    add_driver_vars(m, vmap, I, T, spec.budget)
    for i in range(I):
        for t in range(T):
            m.add_var(vmap.add("lam", (i, t)), -INF, INF, obj=1.0)
            m.add_var(vmap.add("dev", (i, t)), -INF, INF)
    V = vmap.name
    for i in range(I):
        for t in range(T):
            m.add_constr(
                f"demand[{i},{t}]",
                {V("lam", i, t): 1.0, V("dev", i, t): -1.0},
                EQUAL,
                float(forecast[i, t]),
            )
            if isinstance(spec, SUSSpec):
                amp = float(spec.amplitude[i, t])
                m.add_constr(
                    f"recur[{i},{t}]",
                    {V("dev", i, t): 1.0, V("gp", i, t): -amp, V("gm", i, t): amp},
                    EQUAL,
                    0.0,
                )
            else:
                coeffs = {V("dev", i, t): 1.0}
                rhs = 0.0
                for k in range(I):
                    b = float(spec.mixing[i, k])
                    if b:
                        coeffs[V("gp", k, t)] = coeffs.get(V("gp", k, t), 0.0) - b
                        coeffs[V("gm", k, t)] = coeffs.get(V("gm", k, t), 0.0) + b
                for s in range(1, spec.lag + 1):
                    a = float(spec.ar_coeffs[i, s - 1])
                    if not a:
                        continue
                    if t - s >= 0:
                        coeffs[V("dev", i, t - s)] = coeffs.get(V("dev", i, t - s), 0.0) - a
                    else:
                        rhs += a * float(spec.seed_residuals[i, s - t - 1])
                m.add_constr(f"recur[{i},{t}]", coeffs, EQUAL, rhs)
    return m, vmap


# ---------------------------------------------------------------------------
# Static-robust baseline (time-constant placement, reservation, allocation)
# ---------------------------------------------------------------------------


def static_penalty(inst: Instance) -> float:
    """Completion price per unserved request for the static baseline.

    Strictly dominated by serving demand properly (reserving cloud capacity
    for the whole horizon), so the penalty is never active at a converged
    optimum; it only keeps intermediate dispatch LPs feasible.
    """
    c = inst.costs
    serve = float(inst.route_cost_cloud().max()) * inst.horizon + (
        c.resource_per_request * c.slot_length * float(c.reserve_price_cloud.sum())
    )
    return 10.0 * serve + 1.0


def build_static_master(
    inst: Instance, scenario_pool: list[np.ndarray]
) -> tuple[LinearModel, VarMap]:
    """Master for the static baseline: placement and sizing fixed over time.

    Placement is charged once (install plus cloud download at the first
    period, for nodes without the service initially) plus storage over the
    horizon; allocation copies are time-constant and there is no buy/sell.
    """
    I, J, T = inst.dims
    c = inst.costs
    w = c.resource_per_request
    d = c.slot_length
    ce = inst.route_cost_edge()
    cc = inst.route_cost_cloud()
    m = LinearModel("static_master")
    vmap = VarMap()
    for j in range(J):
        place = (c.install_cost[j, 0] + c.download_cloud[j, 0]) * (1.0 - c.initial_placement[j])
        m.add_var(vmap.add("z", (j,)), 0.0, 1.0, integer=True, obj=float(place + c.storage_cost[j].sum()))
        m.add_var(
            vmap.add("s", (j,)), 0.0, float(c.capacity[j]), obj=float(d * c.reserve_price_edge[j].sum())
        )
        m.add_constr(
            f"tie[{j}]",
            {vmap.name("s", j): 1.0, vmap.name("z", j): -float(c.capacity[j])},
            LESS,
            0.0,
        )
    m.add_var(vmap.add("s0", ()), 0.0, INF, obj=float(d * c.reserve_price_cloud.sum()))
    eta = m.add_var(vmap.add("eta", ()), -INF, INF, obj=1.0)
    V = vmap.name
    for l, lam in enumerate(scenario_pool):
        lam = np.asarray(lam, dtype=float)
        tag = f"#{l}"
        for i in range(I):
            m.add_var(vmap.add("xc", (i,), tag))
            for j in range(J):
                m.add_var(vmap.add("xe", (i, j), tag))
        for i in range(I):
            for t in range(T):
                coeffs = {V("xc", i, tag=tag): 1.0}
                for j in range(J):
                    coeffs[V("xe", i, j, tag=tag)] = 1.0
                m.add_constr(f"cover{tag}[{i},{t}]", coeffs, GREATER, float(lam[i, t]))
        for j in range(J):
            coeffs = {V("xe", i, j, tag=tag): w for i in range(I)}
            coeffs[V("s", j)] = -1.0
            m.add_constr(f"ecap{tag}[{j}]", coeffs, LESS, 0.0)
        coeffs = {V("xc", i, tag=tag): w for i in range(I)}
        coeffs[V("s0")] = -1.0
        m.add_constr(f"ccap{tag}", coeffs, LESS, 0.0)
        epi = {V("xc", i, tag=tag): float(T * cc[i]) for i in range(I)}
        for i in range(I):
            for j in range(J):
                epi[V("xe", i, j, tag=tag)] = float(T * ce[i, j])
        epi[eta] = -1.0
        m.add_constr(f"epi[{l}]", epi, LESS, 0.0)
    return m, vmap


def build_static_recourse_lp(
    inst: Instance,
    z: np.ndarray,
    s_edge: np.ndarray,
    s_cloud: float,
    lam: np.ndarray,
    penalty: float | np.ndarray,
) -> tuple[LinearModel, VarMap]:
    """Time-constant dispatch LP for the static baseline at fixed (z, s).

    Unserved demand is absorbed by a completion variable priced at
    ``penalty`` (scalar or per-(i,t)) so the LP and its dual stay
    bounded/feasible; demand rows are named ``cover[i,t]`` for worst-case
    composition.
    """
    I, J, T = inst.dims
    c = inst.costs
    w = c.resource_per_request
    ce = inst.route_cost_edge()
    cc = inst.route_cost_cloud()
    lam = np.asarray(lam, dtype=float)
    penalty = np.broadcast_to(np.asarray(penalty, dtype=float), (I, T))
    m = LinearModel("static_recourse")
    vmap = VarMap()
    for i in range(I):
        m.add_var(vmap.add("xc", (i,)), obj=float(T * cc[i]))
        for j in range(J):
            m.add_var(vmap.add("xe", (i, j)), obj=float(T * ce[i, j]))
        for t in range(T):
            m.add_var(vmap.add("o", (i, t)), obj=float(penalty[i, t]))
    V = vmap.name
    for i in range(I):
        for t in range(T):
            coeffs = {V("xc", i): 1.0, V("o", i, t): 1.0}
            for j in range(J):
                coeffs[V("xe", i, j)] = 1.0
            m.add_constr(f"cover[{i},{t}]", coeffs, GREATER, float(lam[i, t]))
    for j in range(J):
        coeffs = {V("xe", i, j): w for i in range(I)}
        m.add_constr(f"ecap[{j}]", coeffs, LESS, float(s_edge[j] * round(z[j])))
    coeffs = {V("xc", i): w for i in range(I)}
    m.add_constr("ccap", coeffs, LESS, float(s_cloud))
    return m, vmap
