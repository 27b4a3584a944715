"""Generators: shortest paths, cost ranges, trace structure, determinism."""

from __future__ import annotations

import itertools

import networkx as nx
import numpy as np
import pytest

from edgeplan.instance import load_traces
from edgeplan.scenario_gen import (
    CAPACITY_CHOICES,
    gen_costs,
    gen_demand_traces,
    gen_instance,
    gen_topology,
    shortest_paths,
)


def test_two_node_path_distance_and_hops():
    g = nx.Graph()
    g.add_edge(0, 1, delay=5.0)
    d, h = shortest_paths(g, [0], [1])
    assert d[0, 0] == 5.0
    assert h[0, 0] == 1.0


def test_triangle_routes_through_cheap_middle():
    g = nx.Graph()
    g.add_edge(0, 1, delay=2.0)
    g.add_edge(1, 2, delay=2.0)
    g.add_edge(0, 2, delay=10.0)
    d, h = shortest_paths(g, [0], [2])
    assert d[0, 0] == 4.0
    assert h[0, 0] == 2.0


def test_shortest_paths_match_exhaustive_search():
    rng = np.random.default_rng(3)
    g = nx.gnm_random_graph(7, 14, seed=5)
    for a, b in g.edges():
        g[a][b]["delay"] = float(rng.uniform(1, 10))
    d, _ = shortest_paths(g, [0], [6])

    def all_simple_path_cost():
        best = np.inf
        for path in nx.all_simple_paths(g, 0, 6):
            cost = sum(g[u][v]["delay"] for u, v in itertools.pairwise(path))
            best = min(best, cost)
        return best

    assert d[0, 0] == pytest.approx(all_simple_path_cost())


def test_topology_respects_bounds_and_shapes():
    topo = gen_topology(n_total=30, attach_m=2, I=5, J=3, seed=7)
    assert topo.delay_edge.shape == (5, 3)
    assert (topo.delay_edge >= 2.0).all()
    assert (topo.hops_edge >= 1).all()
    assert (topo.hops_cloud >= 1).all()
    assert (topo.delay_cloud >= 50.0).all()  # every cloud route crosses the attachment link


def test_topology_too_small_is_rejected():
    with pytest.raises(ValueError, match="nodes"):
        gen_topology(n_total=5, attach_m=1, I=4, J=3, seed=1)


def test_topology_deterministic_under_seed():
    a = gen_topology(n_total=40, attach_m=2, I=6, J=4, seed=11)
    b = gen_topology(n_total=40, attach_m=2, I=6, J=4, seed=11)
    assert np.array_equal(a.delay_edge, b.delay_edge)
    assert np.array_equal(a.hops_edge, b.hops_edge)


def test_cost_schedule_ranges():
    c = gen_costs(I=4, J=6, T=5, seed=3)
    assert np.all(c.reserve_price_cloud == 0.06)
    assert np.isin(c.capacity, CAPACITY_CHOICES).all()
    assert (c.sell_price_edge <= c.reserve_price_edge).all()
    assert (c.reserve_price_edge <= c.buy_price_edge).all()
    assert (c.sell_price_cloud <= c.reserve_price_cloud).all()
    assert (c.reserve_price_cloud <= c.buy_price_cloud).all()
    assert (c.install_cost >= 0.10).all() and (c.install_cost <= 0.15).all()
    assert ((c.install_cost + c.storage_cost) >= 0.20 - 1e-12).all()
    assert ((c.install_cost + c.storage_cost) <= 0.30 + 1e-12).all()
    off = ~np.eye(6, dtype=bool)
    assert (c.download_en[off] >= 0.05).all() and (c.download_en[off] <= 0.08).all()
    assert np.all(np.einsum("jjt->jt", np.asarray(c.download_en)) == 0.0)
    assert (c.initial_placement == 0.0).all()
    assert c.delay_penalty == 0.0001


def test_cost_schedule_deterministic_under_seed():
    a = gen_costs(I=2, J=3, T=4, seed=9)
    b = gen_costs(I=2, J=3, T=4, seed=9)
    assert np.array_equal(a.buy_price_edge, b.buy_price_edge)
    assert np.array_equal(a.capacity, b.capacity)


def test_traces_constant_when_structure_degenerate(tmp_path):
    phi = np.array([[7.0, 0.0, 0.0, 0.0, 0.0]])
    csv_text = gen_demand_traces(1, 200, phi, np.zeros((1, 1)), np.zeros((1, 1)), seed=2)
    path = tmp_path / "t.csv"
    path.write_text(csv_text)
    traces = load_traces(str(path))
    assert traces.shape == (200, 1)
    assert np.allclose(traces, 7.0)


def test_traces_round_trip_and_determinism(tmp_path):
    phi = np.array([[50.0, 5.0, 0.0, 2.0, 0.0], [80.0, 8.0, 1.0, 0.0, 0.0]])
    ar = np.array([[0.4], [0.5]])
    mixing = np.diag([2.0, 3.0])
    a = gen_demand_traces(2, 500, phi, ar, mixing, seed=21)
    b = gen_demand_traces(2, 500, phi, ar, mixing, seed=21)
    assert a == b
    path = tmp_path / "traces.csv"
    path.write_text(a)
    traces = load_traces(str(path))
    assert traces.shape == (500, 2)
    assert (traces >= 0).all()


def test_trace_fit_recovers_ar_coefficient():
    from edgeplan.uncertainty import fit_ar, fit_seasonal

    phi = np.array([[50.0, 5.0, 0.0, 0.0, 0.0]])
    csv_text = gen_demand_traces(1, 2000, phi, np.array([[0.5]]), np.array([[0.1]]), seed=4)
    rows = [ln.split(",") for ln in csv_text.strip().splitlines()[1:]]
    traces = np.array([[float(v) for v in r[1:]] for r in rows])
    seasonal = fit_seasonal(traces)
    fit = fit_ar(seasonal.residuals, 1)
    assert abs(fit.ar_coeffs[0, 0] - 0.5) <= 0.05


def test_instance_generator_validates_and_is_deterministic():
    a = gen_instance(I=4, J=2, T=3, budget=2, seed=5, uncertainty="dus")
    b = gen_instance(I=4, J=2, T=3, budget=2, seed=5, uncertainty="dus")
    assert np.array_equal(a.forecast, b.forecast)
    assert np.array_equal(a.uncertainty.mixing, b.uncertainty.mixing)
    assert a.check() == []
