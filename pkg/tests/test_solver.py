"""Solver bridge: solve statuses, export round-trips, exact dualization."""

from __future__ import annotations

import itertools
import math
import re

import numpy as np
import pytest

from edgeplan import LinearModel, SolveParams, dualize, export_model, solve
from edgeplan.solver import GREATER, INF, LESS, ModelError

from util import tiny_instance


def one_var_lp() -> LinearModel:
    m = LinearModel("one")
    m.add_var("x", obj=1.0)
    m.add_constr("c1", {"x": 1.0}, ">=", 3.0)
    return m


def test_one_var_lp_optimal():
    res = solve(one_var_lp())
    assert res.status == "optimal"
    assert res.objective == pytest.approx(3.0)
    assert res.values["x"] == pytest.approx(3.0)
    assert res.duals["c1"] == pytest.approx(1.0)


def test_contradictory_constraints_infeasible():
    m = LinearModel("bad")
    m.add_var("x", lb=-INF, ub=INF)
    m.add_constr("lo", {"x": 1.0}, ">=", 1.0)
    m.add_constr("hi", {"x": 1.0}, "<=", 0.0)
    assert solve(m).status == "infeasible"


def test_binary_knapsack_matches_enumeration():
    m = LinearModel("knap", sense="max")
    m.add_var("u", 0, 1, integer=True, obj=3.0)
    m.add_var("v", 0, 1, integer=True, obj=2.0)
    m.add_constr("cap", {"u": 1.0, "v": 1.0}, "<=", 1.0)
    best = max(3 * u + 2 * v for u, v in itertools.product((0, 1), repeat=2) if u + v <= 1)
    res = solve(m)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(best)
    assert res.values["u"] == 1.0


def test_unbounded_lp():
    m = LinearModel("unb")
    m.add_var("x", lb=-INF, ub=INF, obj=1.0)
    assert solve(m).status == "unbounded"


def test_empty_model_returns_offset():
    m = LinearModel("empty")
    m.offset = 4.5
    res = solve(m)
    assert res.status == "optimal"
    assert res.objective == 4.5


def test_duplicate_names_rejected():
    m = LinearModel("dup")
    m.add_var("x")
    with pytest.raises(ModelError):
        m.add_var("x")
    with pytest.raises(ModelError):
        m.add_constr("c", {"y": 1.0}, "<=", 0.0)


# ---------------------------------------------------------------------------
# Export: determinism and round-trips through small text parsers
# ---------------------------------------------------------------------------


def parse_lp(text: str) -> LinearModel:
    """Minimal reader for the LP text this package emits."""
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("\\")]
    sense = "min"
    section = None
    obj_line = ""
    cons: list[str] = []
    bounds: list[str] = []
    ints: list[str] = []
    for ln in lines:
        token = ln.strip().lower()
        if token in ("minimize", "maximize"):
            sense = "min" if token == "minimize" else "max"
            section = "obj"
        elif token == "subject to":
            section = "st"
        elif token == "bounds":
            section = "bounds"
        elif token in ("generals", "binaries"):
            section = "ints"
        elif token == "end":
            section = None
        elif section == "obj":
            obj_line = ln.split(":", 1)[1]
        elif section == "st":
            cons.append(ln)
        elif section == "bounds":
            bounds.append(ln.strip())
        elif section == "ints":
            ints.extend(ln.split())
    m = LinearModel("parsed", sense=sense)

    def parse_terms(body: str):
        terms: dict[str, float] = {}
        const = 0.0
        for sgn, coef, var in re.findall(r"([+-])\s*([0-9.eE+-]+)\s*([A-Za-z_][\w.]*)?", body):
            value = float(coef) * (-1 if sgn == "-" else 1)
            if var:
                terms[var] = terms.get(var, 0.0) + value
            else:
                const += value
        return terms, const

    declared: set[str] = set()

    def ensure(names):
        for n in names:
            if n not in declared:
                declared.add(n)
                m.add_var(n, 0.0, INF)

    obj_terms, const = parse_terms(obj_line)
    ensure(obj_terms)
    for b in bounds:
        if b.endswith(" free"):
            name = b.split()[0]
            ensure([name])
            m.set_bounds(name, -INF, INF)
        elif "=" in b and "<=" not in b:
            name, val = [x.strip() for x in b.split("=")]
            ensure([name])
            m.set_bounds(name, float(val), float(val))
        else:
            lo, name, hi = [x.strip() for x in b.split("<=")]
            ensure([name])
            m.set_bounds(
                name,
                -INF if lo == "-inf" else float(lo),
                INF if hi == "+inf" else float(hi),
            )
    for ln in cons:
        name, body = ln.split(":", 1)
        op = "<=" if "<=" in body else (">=" if ">=" in body else "==")
        lhs, rhs = body.rsplit(op.replace("==", "="), 1) if op == "==" else body.rsplit(op, 1)
        terms, _ = parse_terms(lhs)
        ensure(terms)
        m.add_constr(name.strip(), terms, op, float(rhs))
    for name in ints:
        v = m.var(name)
        m.set_bounds(name, v.lb, v.ub)
        m._vars[name] = type(v)(v.name, v.lb, v.ub, True)
    m.add_obj(obj_terms)
    m.offset = const
    return m


def parse_mps(text: str) -> LinearModel:
    """Minimal reader for the MPS text this package emits."""
    sense = "min"
    rows: dict[str, str] = {}
    cols: dict[str, dict[str, float]] = {}
    rhs: dict[str, float] = {}
    bounds: dict[str, list[tuple[str, float]]] = {}
    integer: set[str] = set()
    order: list[str] = []
    section = None
    in_int = False
    for ln in text.splitlines():
        if not ln.strip():
            continue
        head = ln.split()[0]
        is_header = not ln[0].isspace()
        if is_header and head in ("NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA", "OBJSENSE"):
            section = head
            continue
        parts = ln.split()
        if section == "OBJSENSE":
            sense = "max" if parts[0] == "MAX" else "min"
        elif section == "ROWS":
            rows[parts[1]] = parts[0]
        elif section == "COLUMNS":
            if "MARKER" in ln:
                in_int = "INTORG" in ln
                continue
            name = parts[0]
            if name not in cols:
                cols[name] = {}
                order.append(name)
                if in_int:
                    integer.add(name)
            for row, coef in zip(parts[1::2], parts[2::2]):
                cols[name][row] = float(coef)
        elif section == "RHS":
            rhs[parts[1]] = float(parts[2])
        elif section == "BOUNDS":
            code, _, name = parts[0], parts[1], parts[2]
            val = float(parts[3]) if len(parts) > 3 else 0.0
            bounds.setdefault(name, []).append((code, val))
    m = LinearModel("parsed", sense=sense)
    for name in order:
        lb, ub = 0.0, INF
        for code, val in bounds.get(name, []):
            if code == "UP":
                ub = val
            elif code == "LO":
                lb = val
            elif code == "FX":
                lb = ub = val
            elif code == "FR":
                lb, ub = -INF, INF
            elif code == "MI":
                lb = -INF
        m.add_var(name, lb, ub, integer=name in integer, obj=cols[name].get("OBJ", 0.0))
    sense_map = {"L": "<=", "G": ">=", "E": "=="}
    for row, code in rows.items():
        if code == "N":
            continue
        coeffs = {v: cols[v][row] for v in order if row in cols[v]}
        m.add_constr(row, coeffs, sense_map[code], rhs.get(row, 0.0))
    m.offset = -rhs.get("OBJ", 0.0)
    return m


@pytest.mark.parametrize("fmt,parser", [("lp", parse_lp), ("mps", parse_mps)])
def test_export_round_trip_one_var(fmt, parser):
    text = export_model(one_var_lp(), fmt)
    back = solve(parser(text))
    assert back.status == "optimal"
    assert back.objective == pytest.approx(3.0)


def test_export_empty_model_is_valid_text():
    m = LinearModel("empty")
    for fmt in ("lp", "mps"):
        text = export_model(m, fmt)
        assert text.endswith("End\n") or text.endswith("ENDATA\n")


@pytest.mark.parametrize("fmt,parser", [("lp", parse_lp), ("mps", parse_mps)])
def test_export_round_trip_full_model(fmt, parser):
    from edgeplan.models import build_deterministic

    inst = tiny_instance(I=2, J=1, T=1, seed=11)
    model, _ = build_deterministic(inst, inst.forecast)
    direct = solve(model)
    back = solve(parser(export_model(model, fmt)))
    assert back.status == "optimal"
    assert back.objective == pytest.approx(direct.objective, abs=1e-9, rel=1e-9)


def test_export_deterministic_bytes():
    inst = tiny_instance(I=2, J=2, T=2, seed=5)
    from edgeplan.models import build_deterministic

    a, _ = build_deterministic(inst, inst.forecast)
    b, _ = build_deterministic(inst, inst.forecast)
    for fmt in ("lp", "mps"):
        assert export_model(a, fmt) == export_model(b, fmt)


def test_sanitization_collision_raises():
    m = LinearModel("collide")
    m.add_var("x[1,2]")
    m.add_var("x_1_2_")
    with pytest.raises(ModelError):
        export_model(m, "lp")


# ---------------------------------------------------------------------------
# Dualization
# ---------------------------------------------------------------------------


def test_dual_of_one_var_lp_structure_and_value():
    dm = dualize(one_var_lp())
    assert dm.model.sense == "max"
    y = dm.dual_of["c1"]
    assert dm.model.objective[y] == pytest.approx(3.0)
    assert dm.rhs_coeff["c1"] == pytest.approx(3.0)
    var = dm.model.var(y)
    assert (var.lb, var.ub) == (0.0, INF)
    con = dm.model.constr("d[x]")
    assert con.sense == LESS and con.rhs == pytest.approx(1.0)
    res = solve(dm.model)
    assert res.objective == pytest.approx(3.0)


def test_transportation_lp_strong_duality():
    supply = [7.0, 5.0]
    demand = [4.0, 8.0]
    cost = [[2.0, 5.0], [3.0, 1.0]]
    m = LinearModel("transport")
    for i in range(2):
        for j in range(2):
            m.add_var(f"f[{i},{j}]", obj=cost[i][j])
    for i in range(2):
        m.add_constr(f"supply[{i}]", {f"f[{i},{j}]": 1.0 for j in range(2)}, LESS, supply[i])
    for j in range(2):
        m.add_constr(f"demand[{j}]", {f"f[{i},{j}]": 1.0 for i in range(2)}, GREATER, demand[j])
    primal = solve(m)
    dual = solve(dualize(m).model)
    assert primal.status == dual.status == "optimal"
    assert abs(primal.objective - dual.objective) <= 1e-8 * (1 + abs(primal.objective))


def test_infeasible_primal_dual_not_optimal():
    m = LinearModel("inf")
    m.add_var("x", lb=-INF, ub=INF)
    m.add_constr("lo", {"x": 1.0}, ">=", 1.0)
    m.add_constr("hi", {"x": 1.0}, "<=", 0.0)
    assert solve(m).status == "infeasible"
    assert solve(dualize(m).model).status in ("unbounded", "infeasible")


def random_box_lp(rng: np.random.Generator) -> LinearModel:
    """Feasible (interior point by construction) and bounded (finite box)."""
    n = int(rng.integers(1, 21))
    k = int(rng.integers(1, 21))
    m = LinearModel("rand")
    ub = rng.uniform(1.0, 10.0, n)
    x0 = rng.uniform(0.0, 1.0, n) * ub
    for j in range(n):
        m.add_var(f"x{j}", 0.0, float(ub[j]), obj=float(rng.normal()))
    for r in range(k):
        coeffs = {f"x{j}": float(rng.normal()) for j in range(n) if rng.random() < 0.7}
        if not coeffs:
            coeffs = {"x0": 1.0}
        lhs = sum(c * x0[int(v[1:])] for v, c in coeffs.items())
        if rng.random() < 0.5:
            m.add_constr(f"c{r}", coeffs, LESS, lhs + float(rng.uniform(0.1, 2.0)))
        else:
            m.add_constr(f"c{r}", coeffs, GREATER, lhs - float(rng.uniform(0.1, 2.0)))
    return m


def test_strong_duality_on_100_random_lps():
    rng = np.random.default_rng(20240817)
    for _ in range(100):
        m = random_box_lp(rng)
        primal = solve(m)
        assert primal.status == "optimal"
        dual = solve(dualize(m).model)
        assert dual.status == "optimal"
        assert abs(primal.objective - dual.objective) <= 1e-8 * (1 + abs(primal.objective))


def test_rhs_mapping_tracks_perturbation():
    rng = np.random.default_rng(7)
    m = random_box_lp(rng)
    dm = dualize(m)
    dual_res = solve(dm.model)
    target = m.constraints[0].name
    delta = 0.37

    perturbed = LinearModel("pert")
    for v in m.variables:
        perturbed.add_var(v.name, v.lb, v.ub, obj=m.objective.get(v.name, 0.0))
    for con in m.constraints:
        bump = delta if con.name == target else 0.0
        perturbed.add_constr(con.name, dict(con.coeffs), con.sense, con.rhs + bump)
    dm2 = dualize(perturbed)

    def value_at(dmod, point):
        return dmod.offset + sum(point.get(v, 0.0) * c for v, c in dmod.objective.items())

    old = value_at(dm.model, dual_res.values)
    new = value_at(dm2.model, dual_res.values)
    y_target = dual_res.values[dm.dual_of[target]]
    assert new - old == pytest.approx(y_target * delta, abs=1e-10)


def test_integer_model_rejected_by_dualize():
    m = LinearModel("int")
    m.add_var("x", 0, 1, integer=True, obj=1.0)
    with pytest.raises(ModelError):
        dualize(m)


def test_lifted_bounds_dualize_correctly():
    # min -x, 1 <= x <= 4  ->  optimum -4; bounds become explicit rows
    m = LinearModel("bounds")
    m.add_var("x", 1.0, 4.0, obj=-1.0)
    primal = solve(m)
    dm = dualize(m)
    dual = solve(dm.model)
    assert primal.objective == pytest.approx(-4.0)
    assert dual.objective == pytest.approx(-4.0)
    assert "_ub[x]" in dm.dual_of and "_lb[x]" in dm.dual_of


def test_time_limit_is_accepted():
    res = solve(one_var_lp(), SolveParams(time_limit=10.0))
    assert res.status == "optimal"
    assert math.isfinite(res.objective)
