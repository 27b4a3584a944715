"""Solver-agnostic MILP/LP container, HiGHS bridge, text export, and LP dualization.

The rest of the package builds every optimization problem as a
:class:`LinearModel` and hands it to :func:`solve`, which dispatches to the
HiGHS backend shipped with SciPy (``linprog`` for pure LPs so constraint duals
are available, ``milp`` otherwise).  :func:`dualize` derives the exact LP dual
of a minimization LP symbolically, which downstream code uses to collapse
inner minimizations via strong duality.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp
from scipy.sparse import csr_matrix

INF = math.inf

LESS = "<="
GREATER = ">="
EQUAL = "=="
_SENSES = (LESS, GREATER, EQUAL)

# SolveResult.status values.
OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
TIME_LIMIT = "time_limit"
GAP_LIMIT = "gap_limit"
ERROR = "error"

_INT_SNAP_TOL = 1e-5


class ModelError(ValueError):
    """Raised for ill-formed models (duplicate names, unknown variables, ...)."""


class SolverError(RuntimeError):
    """Raised when the backend fails or returns an unusable answer."""


@dataclass(frozen=True)
class Variable:
    name: str
    lb: float = 0.0
    ub: float = INF
    integer: bool = False


@dataclass(frozen=True)
class Constraint:
    name: str
    coeffs: dict[str, float]
    sense: str
    rhs: float


class LinearModel:
    """Ordered container for a MILP/LP with named variables and constraints.

    Models are mutable while being built and must be treated as frozen once a
    builder returns them; nothing in this package mutates a shared model.
    Iteration order (and therefore export order) is insertion order.
    """

    def __init__(self, name: str = "model", sense: str = "min") -> None:
        if sense not in ("min", "max"):
            raise ModelError(f"objective sense must be 'min' or 'max', got {sense!r}")
        self.name = name
        self.sense = sense
        self.offset = 0.0
        self.objective: dict[str, float] = {}
        self._vars: dict[str, Variable] = {}
        self._cons: dict[str, Constraint] = {}

    # -- construction -------------------------------------------------------

    def add_var(
        self,
        name: str,
        lb: float = 0.0,
        ub: float = INF,
        integer: bool = False,
        obj: float = 0.0,
    ) -> str:
        if name in self._vars:
            raise ModelError(f"duplicate variable name {name!r}")
        if not lb <= ub:
            raise ModelError(f"variable {name!r} has lb {lb} > ub {ub}")
        self._vars[name] = Variable(name, float(lb), float(ub), bool(integer))
        if obj:
            self.objective[name] = self.objective.get(name, 0.0) + float(obj)
        return name

    def add_constr(self, name: str, coeffs: dict[str, float], sense: str, rhs: float) -> str:
        if name in self._cons:
            raise ModelError(f"duplicate constraint name {name!r}")
        if sense not in _SENSES:
            raise ModelError(f"unknown constraint sense {sense!r}")
        clean = {}
        for var, coef in coeffs.items():
            if var not in self._vars:
                raise ModelError(f"constraint {name!r} references undeclared variable {var!r}")
            if coef != 0.0:
                clean[var] = float(coef)
        self._cons[name] = Constraint(name, clean, sense, float(rhs))
        return name

    def add_obj(self, coeffs: dict[str, float]) -> None:
        for var, coef in coeffs.items():
            if var not in self._vars:
                raise ModelError(f"objective references undeclared variable {var!r}")
            if coef:
                self.objective[var] = self.objective.get(var, 0.0) + float(coef)

    def set_bounds(self, name: str, lb: float | None = None, ub: float | None = None) -> None:
        old = self._vars[name]
        new_lb = old.lb if lb is None else float(lb)
        new_ub = old.ub if ub is None else float(ub)
        if not new_lb <= new_ub:
            raise ModelError(f"variable {name!r} would get lb {new_lb} > ub {new_ub}")
        self._vars[name] = Variable(old.name, new_lb, new_ub, old.integer)

    # -- inspection ---------------------------------------------------------

    @property
    def variables(self) -> list[Variable]:
        return list(self._vars.values())

    @property
    def constraints(self) -> list[Constraint]:
        return list(self._cons.values())

    def var(self, name: str) -> Variable:
        return self._vars[name]

    def constr(self, name: str) -> Constraint:
        return self._cons[name]

    @property
    def num_vars(self) -> int:
        return len(self._vars)

    @property
    def num_constrs(self) -> int:
        return len(self._cons)

    def has_integers(self) -> bool:
        return any(v.integer for v in self._vars.values())

    def __repr__(self) -> str:  # pragma: no cover
        return (
            f"LinearModel({self.name!r}, {self.sense}, "
            f"{self.num_vars} vars, {self.num_constrs} constrs)"
        )


@dataclass(frozen=True)
class SolveParams:
    """Backend parameters.

    ``seed`` is accepted for interface stability; the pinned HiGHS backend is
    deterministic in its default single-threaded configuration, so the seed is
    recorded but not forwarded.
    """

    rel_gap: float = 1e-9
    time_limit: float | None = None
    seed: int = 0


@dataclass
class SolveResult:
    status: str
    objective: float
    values: dict[str, float]
    duals: dict[str, float] | None = None
    gap: float = 0.0
    message: str = ""

    def value(self, name: str) -> float:
        return self.values[name]

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


def _matrix(model: LinearModel, index: dict[str, int]):
    """Constraint matrix in CSR form plus per-row sense and rhs arrays."""
    rows, cols, data = [], [], []
    senses, rhs, names = [], [], []
    for r, con in enumerate(model.constraints):
        for var, coef in con.coeffs.items():
            rows.append(r)
            cols.append(index[var])
            data.append(coef)
        senses.append(con.sense)
        rhs.append(con.rhs)
        names.append(con.name)
    mat = csr_matrix(
        (data, (rows, cols)), shape=(model.num_constrs, model.num_vars)
    )
    return mat, senses, np.asarray(rhs, dtype=float), names


def _snap(model: LinearModel, x: np.ndarray) -> dict[str, float]:
    """Round integer variables and clamp tiny bound violations."""
    out: dict[str, float] = {}
    for v, val in zip(model.variables, x):
        val = float(val)
        if v.integer and abs(val - round(val)) <= _INT_SNAP_TOL:
            val = float(round(val))
        val = min(max(val, v.lb), v.ub)
        out[v.name] = val
    return out


def solve(model: LinearModel, params: SolveParams | None = None) -> SolveResult:
    """Solve a LinearModel with HiGHS; returns duals for pure-LP models.

    Reported duals follow the sensitivity convention: ``duals[c]`` is the
    derivative of the optimal objective with respect to the right-hand side of
    constraint ``c`` (in the model's own objective sense).
    """
    params = params or SolveParams()
    if model.num_vars == 0:
        return SolveResult(OPTIMAL, model.offset, {}, {}, 0.0)

    index = {v.name: i for i, v in enumerate(model.variables)}
    c = np.zeros(model.num_vars)
    for var, coef in model.objective.items():
        c[index[var]] = coef
    flip = 1.0 if model.sense == "min" else -1.0
    c = flip * c
    lb = np.array([v.lb for v in model.variables])
    ub = np.array([v.ub for v in model.variables])
    mat, senses, rhs, con_names = _matrix(model, index)

    if model.has_integers():
        res = _solve_milp(model, c, lb, ub, mat, senses, rhs, params)
        duals = None
        gap = res.get("gap", 0.0)
    else:
        res = _solve_lp(model, c, lb, ub, mat, senses, rhs, con_names, params)
        duals = res.get("duals")
        gap = 0.0

    status = res["status"]
    if status not in (OPTIMAL, TIME_LIMIT) or res.get("x") is None:
        return SolveResult(status, math.nan, {}, None, math.inf, res.get("message", ""))

    objective = flip * res["fun"] + model.offset
    values = _snap(model, res["x"])
    if duals is not None and flip < 0:
        duals = {k: -v for k, v in duals.items()}
    return SolveResult(status, objective, values, duals, gap, res.get("message", ""))


def _solve_lp(model, c, lb, ub, mat, senses, rhs, con_names, params):
    # Split rows by sense; >= rows are negated into <= form and their duals
    # flipped back afterwards so the sensitivity convention is preserved.
    ub_rows, eq_rows, ub_sign = [], [], []
    for r, s in enumerate(senses):
        if s == EQUAL:
            eq_rows.append(r)
        else:
            ub_rows.append(r)
            ub_sign.append(1.0 if s == LESS else -1.0)
    kwargs = {}
    if ub_rows:
        sign = np.asarray(ub_sign)
        kwargs["A_ub"] = mat[ub_rows].multiply(sign[:, None]).tocsr()
        kwargs["b_ub"] = rhs[ub_rows] * sign
    if eq_rows:
        kwargs["A_eq"] = mat[eq_rows]
        kwargs["b_eq"] = rhs[eq_rows]
    options = {"disp": False, "presolve": True}
    if params.time_limit is not None:
        options["time_limit"] = params.time_limit
    res = linprog(
        c, bounds=np.column_stack([lb, ub]), method="highs", options=options, **kwargs
    )
    if res.status == 4:
        # presolve cannot always separate infeasible from unbounded; retry without
        res = linprog(
            c,
            bounds=np.column_stack([lb, ub]),
            method="highs",
            options={**options, "presolve": False},
            **kwargs,
        )
    status = {0: OPTIMAL, 1: TIME_LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}.get(res.status, ERROR)
    out = {"status": status, "message": res.message, "x": res.x, "fun": res.fun}
    if status == OPTIMAL:
        duals = {}
        if ub_rows:
            for r, sgn, m in zip(ub_rows, ub_sign, res.ineqlin.marginals):
                duals[con_names[r]] = sgn * float(m)
        if eq_rows:
            for r, m in zip(eq_rows, res.eqlin.marginals):
                duals[con_names[r]] = float(m)
        out["duals"] = duals
    return out


def _solve_milp(model, c, lb, ub, mat, senses, rhs, params):
    row_lb = np.where(np.array(senses) == LESS, -np.inf, rhs)
    row_ub = np.where(np.array(senses) == GREATER, np.inf, rhs)
    integrality = np.array([1 if v.integer else 0 for v in model.variables])
    options = {"disp": False, "mip_rel_gap": params.rel_gap}
    if params.time_limit is not None:
        options["time_limit"] = params.time_limit
    constraints = (
        [LinearConstraint(mat, row_lb, row_ub)] if model.num_constrs else []
    )
    res = milp(
        c=c,
        constraints=constraints,
        integrality=integrality,
        bounds=Bounds(lb, ub),
        options=options,
    )
    if res.status == 4:
        # presolve cannot always separate infeasible from unbounded; retry without
        res = milp(
            c=c,
            constraints=constraints,
            integrality=integrality,
            bounds=Bounds(lb, ub),
            options={**options, "presolve": False},
        )
    status = {0: OPTIMAL, 1: TIME_LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}.get(res.status, ERROR)
    gap = float(res.mip_gap) if res.mip_gap is not None else 0.0
    return {"status": status, "message": res.message, "x": res.x, "fun": res.fun, "gap": gap}


# ---------------------------------------------------------------------------
# Text export
# ---------------------------------------------------------------------------

_NAME_RE = re.compile(r"[^A-Za-z0-9_.]")


def _sanitize_names(names: list[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    seen: dict[str, str] = {}
    for name in names:
        clean = _NAME_RE.sub("_", name)
        if clean[0].isdigit():
            clean = "n" + clean
        if clean in seen:
            raise ModelError(
                f"name collision after sanitization: {name!r} and {seen[clean]!r} "
                f"both map to {clean!r}"
            )
        seen[clean] = name
        out[name] = clean
    return out


def _num(x: float) -> str:
    return repr(float(x))


def export_model(model: LinearModel, format: str = "lp") -> str:
    """Render the model as LP or MPS text; byte-deterministic for equal input."""
    if format == "lp":
        return _export_lp(model)
    if format == "mps":
        return _export_mps(model)
    raise ValueError(f"unknown export format {format!r}")


def _export_lp(model: LinearModel) -> str:
    vnames = _sanitize_names([v.name for v in model.variables])
    cnames = _sanitize_names([c.name for c in model.constraints])
    lines = [f"\\ {model.name}"]
    lines.append("Maximize" if model.sense == "max" else "Minimize")
    terms = [f"{'+' if coef >= 0 else '-'} {_num(abs(coef))} {vnames[var]}"
             for var, coef in model.objective.items() if coef]
    if model.offset:
        terms.append(f"{'+' if model.offset >= 0 else '-'} {_num(abs(model.offset))}")
    lines.append(" obj: " + (" ".join(terms) if terms else "0"))
    lines.append("Subject To")
    for con in model.constraints:
        body = " ".join(
            f"{'+' if coef >= 0 else '-'} {_num(abs(coef))} {vnames[var]}"
            for var, coef in con.coeffs.items()
        )
        op = {LESS: "<=", GREATER: ">=", EQUAL: "="}[con.sense]
        lines.append(f" {cnames[con.name]}: {body or '0 ' + next(iter(vnames.values()))} {op} {_num(con.rhs)}")
    lines.append("Bounds")
    for v in model.variables:
        name = vnames[v.name]
        if v.lb == -INF and v.ub == INF:
            lines.append(f" {name} free")
        elif v.lb == v.ub:
            lines.append(f" {name} = {_num(v.lb)}")
        else:
            lo = "-inf" if v.lb == -INF else _num(v.lb)
            hi = "+inf" if v.ub == INF else _num(v.ub)
            lines.append(f" {lo} <= {name} <= {hi}")
    ints = [vnames[v.name] for v in model.variables if v.integer]
    if ints:
        lines.append("Generals")
        lines.append(" " + " ".join(ints))
    lines.append("End")
    return "\n".join(lines) + "\n"


def _export_mps(model: LinearModel) -> str:
    vnames = _sanitize_names([v.name for v in model.variables])
    cnames = _sanitize_names([c.name for c in model.constraints])
    lines = [f"NAME          {model.name}"]
    lines.append("OBJSENSE")
    lines.append("    MAX" if model.sense == "max" else "    MIN")
    lines.append("ROWS")
    lines.append(" N  OBJ")
    sense_code = {LESS: "L", GREATER: "G", EQUAL: "E"}
    for con in model.constraints:
        lines.append(f" {sense_code[con.sense]}  {cnames[con.name]}")
    lines.append("COLUMNS")
    # column-major entries; integer runs delimited by MARKER records
    in_int = False
    for v in model.variables:
        if v.integer != in_int:
            marker = "INTORG" if v.integer else "INTEND"
            lines.append(f"    MARKER                 'MARKER'                 '{marker}'")
            in_int = v.integer
        name = vnames[v.name]
        entries = []
        coef = model.objective.get(v.name, 0.0)
        if coef:
            entries.append(("OBJ", coef))
        for con in model.constraints:
            if v.name in con.coeffs:
                entries.append((cnames[con.name], con.coeffs[v.name]))
        if not entries:
            entries.append(("OBJ", 0.0))
        for row, coef in entries:
            lines.append(f"    {name}  {row}  {_num(coef)}")
    if in_int:
        lines.append("    MARKER                 'MARKER'                 'INTEND'")
    lines.append("RHS")
    for con in model.constraints:
        if con.rhs:
            lines.append(f"    RHS  {cnames[con.name]}  {_num(con.rhs)}")
    if model.offset:
        lines.append(f"    RHS  OBJ  {_num(-model.offset)}")
    lines.append("BOUNDS")
    for v in model.variables:
        name = vnames[v.name]
        if v.lb == -INF and v.ub == INF:
            lines.append(f" FR BND  {name}")
            continue
        if v.lb == v.ub:
            lines.append(f" FX BND  {name}  {_num(v.lb)}")
            continue
        if v.lb == -INF:
            lines.append(f" MI BND  {name}")
        elif v.lb != 0.0 or v.integer:
            lines.append(f" LO BND  {name}  {_num(v.lb)}")
        if v.ub != INF:
            lines.append(f" UP BND  {name}  {_num(v.ub)}")
        elif v.integer:
            lines.append(f" PL BND  {name}")
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# LP duality
# ---------------------------------------------------------------------------


@dataclass
class DualModel:
    """Exact dual of a minimization LP.

    ``dual_of`` maps every primal constraint name (plus synthetic rows lifted
    from finite variable bounds) to its dual variable; ``rhs_coeff`` records
    the primal right-hand side that appears as that dual variable's objective
    coefficient.  For any feasible bounded primal, the optimal values of
    ``model`` and the primal coincide (strong duality).
    """

    model: LinearModel
    dual_of: dict[str, str]
    rhs_coeff: dict[str, float]


def dualize(model: LinearModel) -> DualModel:
    """Derive the dual of a pure minimization LP.

    Variables with bounds other than [0, inf) or (-inf, inf) have their finite
    bounds lifted into explicit rows first, so every dual constraint is either
    an inequality (primal variable sign-constrained) or an equality (primal
    variable free).  Dual variables of >= rows are nonnegative, of <= rows
    nonpositive, of == rows free; the dual objective is ``sum(rhs * y)`` plus
    the primal offset, so reported dual values match the sensitivity
    convention used by :func:`solve`.
    """
    if model.sense != "min":
        raise ModelError("dualize expects a minimization LP")
    if model.has_integers():
        raise ModelError("dualize expects a pure LP (integrality flags present)")

    rows: list[tuple[str, dict[str, float], str, float]] = [
        (c.name, c.coeffs, c.sense, c.rhs) for c in model.constraints
    ]
    nonneg: dict[str, bool] = {}
    for v in model.variables:
        lb, ub = v.lb, v.ub
        if ub < INF:
            rows.append((f"_ub[{v.name}]", {v.name: 1.0}, LESS, ub))
        if lb > -INF and lb != 0.0:
            rows.append((f"_lb[{v.name}]", {v.name: 1.0}, GREATER, lb))
            nonneg[v.name] = False
        else:
            nonneg[v.name] = lb == 0.0

    dual = LinearModel(name=f"dual({model.name})", sense="max")
    dual.offset = model.offset
    dual_of: dict[str, str] = {}
    rhs_coeff: dict[str, float] = {}
    columns: dict[str, dict[str, float]] = {v.name: {} for v in model.variables}
    for rname, coeffs, sense, rhs in rows:
        yname = f"y[{rname}]"
        if sense == GREATER:
            lo, hi = 0.0, INF
        elif sense == LESS:
            lo, hi = -INF, 0.0
        else:
            lo, hi = -INF, INF
        dual.add_var(yname, lb=lo, ub=hi, obj=rhs)
        dual_of[rname] = yname
        rhs_coeff[rname] = rhs
        for var, coef in coeffs.items():
            columns[var][yname] = coef
    for v in model.variables:
        sense = LESS if nonneg[v.name] else EQUAL
        dual.add_constr(f"d[{v.name}]", columns[v.name], sense, model.objective.get(v.name, 0.0))
    return DualModel(dual, dual_of, rhs_coeff)
