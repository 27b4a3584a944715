"""Shared instance builders for the test suite."""

from __future__ import annotations

import numpy as np

from edgeplan import CostSchedule, DUSSpec, FirstStage, Instance, SUSSpec, Topology


def make_topology(I: int, J: int, rng: np.random.Generator) -> Topology:
    return Topology(
        delay_edge=rng.uniform(2.0, 10.0, (I, J)),
        delay_cloud=rng.uniform(20.0, 50.0, I),
        hops_edge=rng.integers(1, 4, (I, J)).astype(float),
        hops_cloud=np.full(I, 5.0),
    )


def make_costs(J: int, T: int, rng: np.random.Generator, **overrides) -> CostSchedule:
    fields = dict(
        slot_length=1.0 / 3.0,
        reserve_price_edge=rng.uniform(0.08, 0.12, (J, T)),
        reserve_price_cloud=np.full(T, 0.06),
        buy_price_edge=rng.uniform(0.12, 0.15, (J, T)),
        buy_price_cloud=np.full(T, 0.07),
        sell_price_edge=rng.uniform(0.01, 0.03, (J, T)),
        sell_price_cloud=rng.uniform(0.005, 0.01, T),
        install_cost=rng.uniform(0.10, 0.15, (J, T)),
        storage_cost=rng.uniform(0.05, 0.15, (J, T)),
        download_en=_offdiag(rng.uniform(0.05, 0.08, (J, J, T))),
        download_cloud=rng.uniform(0.10, 0.30, (J, T)),
        bandwidth_unit=0.02,
        request_size=0.02,
        resource_per_request=0.02,
        delay_penalty=0.0001,
        capacity=rng.choice([32.0, 48.0, 64.0], size=J),
        initial_placement=np.zeros(J),
    )
    fields.update(overrides)
    return CostSchedule(**fields)


def _offdiag(h: np.ndarray) -> np.ndarray:
    out = h.copy()
    np.einsum("jjt->jt", out)[:] = 0.0
    return out


def tiny_instance(
    I: int = 2,
    J: int = 1,
    T: int = 2,
    gamma: int = 1,
    seed: int = 3,
    kind: str = "sus",
    rel_amplitude: float = 0.3,
    lag: int = 1,
    cost_overrides: dict | None = None,
    demand_scale: float = 1.0,
) -> Instance:
    """Small random instance with a real edge/cloud tradeoff."""
    rng = np.random.default_rng(seed)
    topo = make_topology(I, J, rng)
    costs = make_costs(J, T, rng, **(cost_overrides or {}))
    forecast = demand_scale * rng.uniform(50.0, 300.0, (I, T))
    if kind == "sus":
        spec: SUSSpec | DUSSpec = SUSSpec(amplitude=rel_amplitude * forecast, budget=gamma)
    elif kind == "dus":
        spec = DUSSpec(
            lag=lag,
            ar_coeffs=rng.uniform(0.3, 0.6, (I, lag)) / lag,
            mixing=np.diag(rel_amplitude * forecast.mean(axis=1)),
            seed_residuals=np.zeros((I, lag)),
            budget=gamma,
        )
    else:
        raise ValueError(kind)
    return Instance(topology=topo, costs=costs, horizon=T, forecast=forecast, uncertainty=spec).validate()


def random_first_stage(inst: Instance, rng: np.random.Generator) -> FirstStage:
    J, T = inst.en_count, inst.horizon
    s_edge = rng.uniform(0.0, 1.0, (J, T)) * inst.costs.capacity[:, None]
    peak = inst.costs.resource_per_request * float(inst.forecast.sum(axis=0).max())
    s_cloud = rng.uniform(0.0, max(peak, 1.0), T)
    return FirstStage(s_edge, s_cloud)
