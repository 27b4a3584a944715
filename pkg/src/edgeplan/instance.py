"""Problem data model: topology, cost schedule, plans, validation, costing.

All container types normalize their fields to read-only float arrays on
construction and are safe to share across workers.  Index conventions follow
the package-wide layout: ``i`` access points (APs), ``j``/``m`` edge nodes
(ENs), ``t`` periods; matrices are ``[i][t]``, ``[j][t]``, ``[m][j][t]``
row-major.  Node index 0 in names like ``x0``/``s0`` refers to the cloud.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

import numpy as np

from .uncertainty import DUSSpec, SUSSpec

TOTAL_TOL = 1e-9
FEAS_TOL = 1e-6  # absolute feasibility tolerance, aligned with MILP solver defaults


class InstanceError(ValueError):
    """Validation failure; ``violations`` lists every broken rule."""

    def __init__(self, violations: list[str]):
        super().__init__("invalid instance:\n  " + "\n  ".join(violations))
        self.violations = violations


def _ro(a, shape=None) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if shape is not None and arr.shape != tuple(shape):
        raise InstanceError([f"expected shape {tuple(shape)}, got {arr.shape}"])
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Topology:
    """Delays (ms) and hop counts between APs, ENs, and the cloud."""

    delay_edge: np.ndarray  # (I, J)
    delay_cloud: np.ndarray  # (I,)
    hops_edge: np.ndarray  # (I, J)
    hops_cloud: np.ndarray  # (I,)

    def __post_init__(self):
        object.__setattr__(self, "delay_edge", _ro(np.atleast_2d(self.delay_edge)))
        I, J = self.delay_edge.shape
        object.__setattr__(self, "delay_cloud", _ro(self.delay_cloud, (I,)))
        object.__setattr__(self, "hops_edge", _ro(self.hops_edge, (I, J)))
        object.__setattr__(self, "hops_cloud", _ro(self.hops_cloud, (I,)))

    @property
    def ap_count(self) -> int:
        return self.delay_edge.shape[0]

    @property
    def en_count(self) -> int:
        return self.delay_edge.shape[1]

    def check(self) -> list[str]:
        out = []
        if not (self.delay_edge > 0).all() or not (self.delay_cloud > 0).all():
            out.append("all network delays must be > 0")
        if not (self.hops_edge >= 1).all() or not (self.hops_cloud >= 1).all():
            out.append("all hop counts must be >= 1")
        return out


@dataclass(frozen=True)
class CostSchedule:
    """Prices, one-off costs, and physical constants for one planning run.

    Price ordering sell <= reserve <= buy is enforced at every node-period to
    rule out arbitrage between the reservation and adjustment markets.
    """

    slot_length: float  # hours
    reserve_price_edge: np.ndarray  # (J, T) $/vCPU·h
    reserve_price_cloud: np.ndarray  # (T,)
    buy_price_edge: np.ndarray  # (J, T)
    buy_price_cloud: np.ndarray  # (T,)
    sell_price_edge: np.ndarray  # (J, T)
    sell_price_cloud: np.ndarray  # (T,)
    install_cost: np.ndarray  # (J, T) $
    storage_cost: np.ndarray  # (J, T) $
    download_en: np.ndarray  # (J, J, T) $, [m][j][t], diagonal unused
    download_cloud: np.ndarray  # (J, T) $
    bandwidth_unit: float  # $/hop·unit
    request_size: float  # data units
    resource_per_request: float  # vCPU per request
    delay_penalty: float  # $/ms·request
    capacity: np.ndarray  # (J,) vCPU
    initial_placement: np.ndarray  # (J,) binary

    def __post_init__(self):
        object.__setattr__(self, "reserve_price_edge", _ro(np.atleast_2d(self.reserve_price_edge)))
        J, T = self.reserve_price_edge.shape
        for name, shape in [
            ("reserve_price_cloud", (T,)),
            ("buy_price_edge", (J, T)),
            ("buy_price_cloud", (T,)),
            ("sell_price_edge", (J, T)),
            ("sell_price_cloud", (T,)),
            ("install_cost", (J, T)),
            ("storage_cost", (J, T)),
            ("download_en", (J, J, T)),
            ("download_cloud", (J, T)),
            ("capacity", (J,)),
            ("initial_placement", (J,)),
        ]:
            object.__setattr__(self, name, _ro(getattr(self, name), shape))

    @property
    def en_count(self) -> int:
        return self.reserve_price_edge.shape[0]

    @property
    def horizon(self) -> int:
        return self.reserve_price_edge.shape[1]

    def check(self) -> list[str]:
        out = []
        if not (self.sell_price_edge <= self.reserve_price_edge + TOTAL_TOL).all() or not (
            self.reserve_price_edge <= self.buy_price_edge + TOTAL_TOL
        ).all():
            out.append("edge price ordering violated: need sell <= reserve <= buy at every (j, t)")
        if not (self.sell_price_cloud <= self.reserve_price_cloud + TOTAL_TOL).all() or not (
            self.reserve_price_cloud <= self.buy_price_cloud + TOTAL_TOL
        ).all():
            out.append("cloud price ordering violated: need sell <= reserve <= buy at every t")
        for name in (
            "reserve_price_edge",
            "reserve_price_cloud",
            "buy_price_edge",
            "buy_price_cloud",
            "sell_price_edge",
            "sell_price_cloud",
            "install_cost",
            "storage_cost",
            "download_en",
            "download_cloud",
        ):
            if (getattr(self, name) < 0).any():
                out.append(f"{name} must be nonnegative")
        for name in ("bandwidth_unit", "request_size", "resource_per_request", "delay_penalty", "slot_length"):
            if getattr(self, name) < 0:
                out.append(f"{name} must be nonnegative")
        if not (self.capacity > 0).all():
            out.append("capacity must be strictly positive")
        if not np.isin(self.initial_placement, (0.0, 1.0)).all():
            out.append("initial_placement must be binary")
        return out


@dataclass(frozen=True)
class Instance:
    """Full problem datum handed to every solver in the package."""

    topology: Topology
    costs: CostSchedule
    horizon: int
    forecast: np.ndarray  # (I, T) requests
    uncertainty: SUSSpec | DUSSpec

    def __post_init__(self):
        object.__setattr__(self, "forecast", _ro(np.atleast_2d(self.forecast)))

    @property
    def ap_count(self) -> int:
        return self.topology.ap_count

    @property
    def en_count(self) -> int:
        return self.topology.en_count

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.ap_count, self.en_count, self.horizon

    def route_cost_edge(self) -> np.ndarray:
        """Per-request routing cost AP i -> EN j: delay penalty plus bandwidth."""
        c = self.costs
        return c.delay_penalty * self.topology.delay_edge + c.bandwidth_unit * c.request_size * self.topology.hops_edge

    def route_cost_cloud(self) -> np.ndarray:
        """Per-request routing cost AP i -> cloud."""
        c = self.costs
        return c.delay_penalty * self.topology.delay_cloud + c.bandwidth_unit * c.request_size * self.topology.hops_cloud

    def check(self) -> list[str]:
        out = self.topology.check() + self.costs.check()
        I, J, T = self.dims
        if self.horizon < 1:
            out.append("horizon must be >= 1")
        if self.costs.en_count != J or self.costs.horizon != T:
            out.append(
                f"cost schedule dimensioned ({self.costs.en_count}, {self.costs.horizon}), topology/horizon need ({J}, {T})"
            )
        if self.forecast.shape != (I, T):
            out.append(f"forecast must be ({I}, {T}), got {self.forecast.shape}")
        elif (self.forecast < 0).any():
            out.append("forecast must be nonnegative")
        out.extend(self.uncertainty.check(I, T))
        return out

    def validate(self) -> "Instance":
        violations = self.check()
        if violations:
            raise InstanceError(violations)
        return self


@dataclass(frozen=True)
class FirstStage:
    """Here-and-now reservation: s_edge (J, T) and s_cloud (T,) in vCPU."""

    s_edge: np.ndarray
    s_cloud: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "s_edge", _ro(np.atleast_2d(self.s_edge)))
        object.__setattr__(self, "s_cloud", _ro(self.s_cloud, (self.s_edge.shape[1],)))

    def check(self, inst: Instance) -> list[str]:
        out = []
        J, T = inst.en_count, inst.horizon
        if self.s_edge.shape != (J, T):
            return [f"s_edge must be ({J}, {T}), got {self.s_edge.shape}"]
        if (self.s_edge < -FEAS_TOL).any() or (self.s_cloud < -FEAS_TOL).any():
            out.append("reservations must be nonnegative")
        if (self.s_edge > inst.costs.capacity[:, None] + FEAS_TOL).any():
            out.append("edge reservation cannot exceed node capacity")
        return out


@dataclass(frozen=True)
class RecoursePlan:
    """Wait-and-see decisions: placement, downloads, allocation, adjustment."""

    placement: np.ndarray  # z (J, T) binary
    startup: np.ndarray  # u (J, T) binary, 1 iff newly installed
    download_en: np.ndarray  # q (J, J, T) binary, [m][j][t]
    download_cloud: np.ndarray  # q0 (J, T) binary
    alloc_edge: np.ndarray  # x (I, J, T) requests
    alloc_cloud: np.ndarray  # x0 (I, T)
    buy_edge: np.ndarray  # yB (J, T) vCPU
    buy_cloud: np.ndarray  # yB0 (T,)
    sell_edge: np.ndarray  # yS (J, T)
    sell_cloud: np.ndarray  # yS0 (T,)

    def __post_init__(self):
        object.__setattr__(self, "placement", _ro(np.atleast_2d(self.placement)))
        J, T = self.placement.shape
        I = np.atleast_3d(np.asarray(self.alloc_edge, dtype=float)).shape[0]
        for name, shape in [
            ("startup", (J, T)),
            ("download_en", (J, J, T)),
            ("download_cloud", (J, T)),
            ("alloc_edge", (I, J, T)),
            ("alloc_cloud", (I, T)),
            ("buy_edge", (J, T)),
            ("buy_cloud", (T,)),
            ("sell_edge", (J, T)),
            ("sell_cloud", (T,)),
        ]:
            object.__setattr__(self, name, _ro(getattr(self, name), shape))

    @staticmethod
    def zeros(I: int, J: int, T: int) -> "RecoursePlan":
        return RecoursePlan(
            placement=np.zeros((J, T)),
            startup=np.zeros((J, T)),
            download_en=np.zeros((J, J, T)),
            download_cloud=np.zeros((J, T)),
            alloc_edge=np.zeros((I, J, T)),
            alloc_cloud=np.zeros((I, T)),
            buy_edge=np.zeros((J, T)),
            buy_cloud=np.zeros(T),
            sell_edge=np.zeros((J, T)),
            sell_cloud=np.zeros(T),
        )


@dataclass(frozen=True)
class CostBreakdown:
    """Seven-term cost split; ``total`` is their sum within 1e-9."""

    c1_reserve: float
    c2_adjust: float
    c3_install: float
    c4_download: float
    c5_storage: float
    c6_delay: float
    c7_bandwidth: float
    total: float

    @property
    def payment(self) -> float:
        """Procurement, adjustment, placement, and storage (no QoS penalties)."""
        return self.c1_reserve + self.c2_adjust + self.c3_install + self.c4_download + self.c5_storage

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def cost_breakdown(inst: Instance, fs: FirstStage, rp: RecoursePlan) -> CostBreakdown:
    """Evaluate the seven cost components of a (first-stage, recourse) pair.

    The installation term is charged through the startup indicator, which is
    exact whenever ``startup >= max(0, placement_t - placement_{t-1})`` holds
    with equality (install costs are nonnegative, so optima always satisfy it).
    """
    I, J, T = inst.dims
    if fs.s_edge.shape != (J, T) or rp.alloc_edge.shape != (I, J, T):
        raise InstanceError(
            [f"plan dimensions do not match instance dims (I={I}, J={J}, T={T})"]
        )
    c = inst.costs
    d = c.slot_length
    c1 = d * (float(np.sum(c.reserve_price_edge * fs.s_edge)) + float(np.dot(c.reserve_price_cloud, fs.s_cloud)))
    c2 = d * (
        float(np.sum(c.buy_price_edge * rp.buy_edge))
        - float(np.sum(c.sell_price_edge * rp.sell_edge))
        + float(np.dot(c.buy_price_cloud, rp.buy_cloud))
        - float(np.dot(c.sell_price_cloud, rp.sell_cloud))
    )
    c3 = float(np.sum(c.install_cost * rp.startup))
    off_diag = ~np.eye(J, dtype=bool)
    c4 = float(np.sum(c.download_en[off_diag] * rp.download_en[off_diag])) + float(
        np.sum(c.download_cloud * rp.download_cloud)
    )
    c5 = float(np.sum(c.storage_cost * rp.placement))
    c6 = c.delay_penalty * (
        float(np.sum(inst.topology.delay_cloud[:, None] * rp.alloc_cloud))
        + float(np.sum(inst.topology.delay_edge[:, :, None] * rp.alloc_edge))
    )
    c7 = c.bandwidth_unit * c.request_size * (
        float(np.sum(inst.topology.hops_cloud[:, None] * rp.alloc_cloud))
        + float(np.sum(inst.topology.hops_edge[:, :, None] * rp.alloc_edge))
    )
    return CostBreakdown(c1, c2, c3, c4, c5, c6, c7, c1 + c2 + c3 + c4 + c5 + c6 + c7)


def second_stage_cost(inst: Instance, fs: FirstStage, rp: RecoursePlan) -> float:
    """Recourse cost only: everything except the reservation term."""
    b = cost_breakdown(inst, fs, rp)
    return b.total - b.c1_reserve


def validate_recourse(
    inst: Instance,
    fs: FirstStage,
    rp: RecoursePlan,
    lam: np.ndarray,
    tol: float = FEAS_TOL,
) -> list[str]:
    """Check a recourse plan against every operating constraint.

    Returns one message per violated rule (empty list means feasible within
    ``tol``).  Rules are named by function: demand coverage, capacity and
    adjustment coupling, sell-back limits, cloud balance, download/placement
    logic, and sign/binarity of the decision fields.
    """
    I, J, T = inst.dims
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (I, T):
        raise InstanceError([f"demand matrix must be ({I}, {T}), got {lam.shape}"])
    out: list[str] = []
    out.extend(fs.check(inst))
    c = inst.costs
    z = rp.placement
    z_prev = np.concatenate([c.initial_placement[:, None], z[:, :-1]], axis=1)

    for name in ("placement", "startup", "download_en", "download_cloud"):
        vals = getattr(rp, name)
        if not np.isin(np.round(vals), (0.0, 1.0)).all() or (np.abs(vals - np.round(vals)) > tol).any():
            out.append(f"{name} must be binary")
    for name in ("alloc_edge", "alloc_cloud", "buy_edge", "buy_cloud", "sell_edge", "sell_cloud"):
        if (getattr(rp, name) < -tol).any():
            out.append(f"{name} must be nonnegative")

    served = rp.alloc_cloud + rp.alloc_edge.sum(axis=1)
    for i, t in zip(*np.where(served < lam - tol)):
        out.append(f"demand coverage violated at (ap={i}, t={t}): served {served[i, t]:.6g} < demand {lam[i, t]:.6g}")
    net_edge = fs.s_edge + rp.buy_edge - rp.sell_edge
    cap_rhs = c.capacity[:, None] * z
    for j, t in zip(*np.where(net_edge > cap_rhs + tol)):
        out.append(
            f"placement/capacity coupling violated at (en={j}, t={t}): held resources "
            f"{net_edge[j, t]:.6g} exceed capacity*placement {cap_rhs[j, t]:.6g}"
        )
    edge_load = c.resource_per_request * rp.alloc_edge.sum(axis=0)
    for j, t in zip(*np.where(edge_load > net_edge + tol)):
        out.append(
            f"edge resource balance violated at (en={j}, t={t}): load {edge_load[j, t]:.6g} "
            f"> reserved+bought-sold {net_edge[j, t]:.6g}"
        )
    cloud_load = c.resource_per_request * rp.alloc_cloud.sum(axis=0)
    net_cloud = fs.s_cloud + rp.buy_cloud - rp.sell_cloud
    for (t,) in zip(*np.where(cloud_load > net_cloud + tol)):
        out.append(
            f"cloud resource balance violated at t={t}: load {cloud_load[t]:.6g} "
            f"> reserved+bought-sold {net_cloud[t]:.6g}"
        )
    for j, t in zip(*np.where(rp.sell_edge > fs.s_edge + tol)):
        out.append(
            f"sell-back limit violated at (en={j}, t={t}): sold {rp.sell_edge[j, t]:.6g} "
            f"> reserved {fs.s_edge[j, t]:.6g}"
        )
    for (t,) in zip(*np.where(rp.sell_cloud > fs.s_cloud + tol)):
        out.append(
            f"cloud sell-back limit violated at t={t}: sold {rp.sell_cloud[t]:.6g} "
            f"> reserved {fs.s_cloud[t]:.6g}"
        )
    off_diag = ~np.eye(J, dtype=bool)
    outgoing = np.where(off_diag[:, :, None], rp.download_en, 0.0).sum(axis=1)  # (m, t)
    for m, t in zip(*np.where(outgoing > z_prev + tol)):
        out.append(
            f"download source violated at (en={m}, t={t}): node exports the service "
            f"without holding it in the previous period"
        )
    incoming = np.where(off_diag[:, :, None], rp.download_en, 0.0).sum(axis=0) + rp.download_cloud
    needed = z - z_prev
    for j, t in zip(*np.where(incoming < needed - tol)):
        out.append(
            f"download requirement violated at (en={j}, t={t}): newly placed service "
            f"was not downloaded from the cloud or another node"
        )
    for j, t in zip(*np.where(rp.startup < needed - tol)):
        out.append(f"startup indicator violated at (en={j}, t={t}): startup < placement increase")
    return out


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _uncertainty_to_json(u: SUSSpec | DUSSpec) -> dict:
    if isinstance(u, SUSSpec):
        return {
            "kind": "sus",
            "budget": int(u.budget),
            "amplitude": u.amplitude.tolist(),
            "clip_negative": bool(u.clip_negative),
        }
    return {
        "kind": "dus",
        "budget": int(u.budget),
        "lag": int(u.lag),
        "ar_coeffs": u.ar_coeffs.tolist(),
        "mixing": u.mixing.tolist(),
        "seed_residuals": u.seed_residuals.tolist(),
        "clip_negative": bool(u.clip_negative),
    }


def _uncertainty_from_json(d: dict) -> SUSSpec | DUSSpec:
    kind = d.get("kind")
    if kind == "sus":
        return SUSSpec(
            amplitude=np.asarray(d["amplitude"], dtype=float),
            budget=int(d["budget"]),
            clip_negative=bool(d.get("clip_negative", False)),
        )
    if kind == "dus":
        return DUSSpec(
            lag=int(d["lag"]),
            ar_coeffs=np.asarray(d["ar_coeffs"], dtype=float),
            mixing=np.asarray(d["mixing"], dtype=float),
            seed_residuals=np.asarray(d["seed_residuals"], dtype=float),
            budget=int(d["budget"]),
            clip_negative=bool(d.get("clip_negative", False)),
        )
    raise InstanceError([f"unknown uncertainty kind {kind!r} (expected 'sus' or 'dus')"])


def instance_to_json(inst: Instance) -> dict:
    t, c = inst.topology, inst.costs
    return {
        "topology": {
            "ap_count": inst.ap_count,
            "en_count": inst.en_count,
            "delay_edge": t.delay_edge.tolist(),
            "delay_cloud": t.delay_cloud.tolist(),
            "hops_edge": t.hops_edge.tolist(),
            "hops_cloud": t.hops_cloud.tolist(),
        },
        "costs": {
            "slot_length": c.slot_length,
            "reserve_price_edge": c.reserve_price_edge.tolist(),
            "reserve_price_cloud": c.reserve_price_cloud.tolist(),
            "buy_price_edge": c.buy_price_edge.tolist(),
            "buy_price_cloud": c.buy_price_cloud.tolist(),
            "sell_price_edge": c.sell_price_edge.tolist(),
            "sell_price_cloud": c.sell_price_cloud.tolist(),
            "install_cost": c.install_cost.tolist(),
            "storage_cost": c.storage_cost.tolist(),
            "download_en": c.download_en.tolist(),
            "download_cloud": c.download_cloud.tolist(),
            "bandwidth_unit": c.bandwidth_unit,
            "request_size": c.request_size,
            "resource_per_request": c.resource_per_request,
            "delay_penalty": c.delay_penalty,
            "capacity": c.capacity.tolist(),
            "initial_placement": c.initial_placement.tolist(),
        },
        "horizon": inst.horizon,
        "forecast": inst.forecast.tolist(),
        "uncertainty": _uncertainty_to_json(inst.uncertainty),
    }


_TOP_KEYS = ("topology", "costs", "horizon", "forecast", "uncertainty")


def instance_from_json(doc: dict) -> Instance:
    missing = [k for k in _TOP_KEYS if k not in doc]
    if missing:
        raise InstanceError([f"missing top-level key {k!r}" for k in missing])
    try:
        t = doc["topology"]
        topo = Topology(
            delay_edge=np.asarray(t["delay_edge"], dtype=float),
            delay_cloud=np.asarray(t["delay_cloud"], dtype=float),
            hops_edge=np.asarray(t["hops_edge"], dtype=float),
            hops_cloud=np.asarray(t["hops_cloud"], dtype=float),
        )
        c = doc["costs"]
        costs = CostSchedule(
            slot_length=float(c["slot_length"]),
            reserve_price_edge=np.asarray(c["reserve_price_edge"], dtype=float),
            reserve_price_cloud=np.asarray(c["reserve_price_cloud"], dtype=float),
            buy_price_edge=np.asarray(c["buy_price_edge"], dtype=float),
            buy_price_cloud=np.asarray(c["buy_price_cloud"], dtype=float),
            sell_price_edge=np.asarray(c["sell_price_edge"], dtype=float),
            sell_price_cloud=np.asarray(c["sell_price_cloud"], dtype=float),
            install_cost=np.asarray(c["install_cost"], dtype=float),
            storage_cost=np.asarray(c["storage_cost"], dtype=float),
            download_en=np.asarray(c["download_en"], dtype=float),
            download_cloud=np.asarray(c["download_cloud"], dtype=float),
            bandwidth_unit=float(c["bandwidth_unit"]),
            request_size=float(c["request_size"]),
            resource_per_request=float(c["resource_per_request"]),
            delay_penalty=float(c["delay_penalty"]),
            capacity=np.asarray(c["capacity"], dtype=float),
            initial_placement=np.asarray(c["initial_placement"], dtype=float),
        )
        inst = Instance(
            topology=topo,
            costs=costs,
            horizon=int(doc["horizon"]),
            forecast=np.asarray(doc["forecast"], dtype=float),
            uncertainty=_uncertainty_from_json(doc["uncertainty"]),
        )
    except InstanceError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceError([f"malformed instance document: {exc}"]) from exc
    return inst.validate()


def load_instance(path: str) -> Instance:
    """Load and fully validate an instance JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InstanceError([f"not valid JSON: {exc}"]) from exc
    return instance_from_json(doc)


def save_instance(inst: Instance, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_json(inst), fh, indent=1)
        fh.write("\n")


def load_traces(path: str) -> np.ndarray:
    """Read a demand-trace CSV (header ``period,area_1,...,area_I``) as (n, I)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if not header or header[0] != "period" or len(header) < 2:
            raise InstanceError(["trace CSV must start with header 'period,area_1,...'"])
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(header):
                raise InstanceError([f"trace row has {len(parts)} fields, header has {len(header)}"])
            rows.append([float(x) for x in parts[1:]])
    return np.asarray(rows, dtype=float)
