"""Brute-force ground truth for small instances.

Both oracles enumerate the full vertex-driver set and therefore refuse (never
sample) when the candidate count exceeds the cap.  They are the single source
of truth the decomposition is checked against in CI.
"""

from __future__ import annotations

import math

import numpy as np

from . import models
from .instance import FirstStage, Instance
from .solver import SolveParams, SolverError, solve
from .uncertainty import (
    CandidateCapError,
    DUSSpec,
    SUSSpec,
    candidate_count,
    enumerate_candidates,
    realize,
)

DEFAULT_CAP = 20_000


def exact_q(
    inst: Instance,
    fs: FirstStage,
    spec: SUSSpec | DUSSpec | None = None,
    cap: int = DEFAULT_CAP,
    params: SolveParams | None = None,
) -> tuple[float, np.ndarray]:
    """Exact worst-case recourse value at a fixed first stage.

    Solves the full recourse MILP at every enumerated driver and returns the
    maximum with one maximizing driver.
    """
    spec = spec if spec is not None else inst.uncertainty
    params = params or SolveParams()
    I, T = inst.ap_count, inst.horizon
    best, best_g = -math.inf, None
    for g in enumerate_candidates(I, T, spec.budget, cap=cap):
        lam = realize(spec, inst.forecast, g)
        model, _ = models.build_recourse_milp(inst, fs, lam)
        res = solve(model, params)
        if not res.is_optimal:
            raise SolverError(f"oracle recourse solve failed: {res.status} {res.message}")
        if res.objective > best:
            best, best_g = res.objective, g
    return best, best_g


def exact_full(
    inst: Instance,
    spec: SUSSpec | DUSSpec | None = None,
    cap: int = DEFAULT_CAP,
    params: SolveParams | None = None,
) -> tuple[float, FirstStage]:
    """Exact min-max optimum via one master over the full candidate set."""
    spec = spec if spec is not None else inst.uncertainty
    params = params or SolveParams()
    I, T = inst.ap_count, inst.horizon
    n = candidate_count(I, T, spec.budget)
    if n > cap:
        raise CandidateCapError(f"{n} candidates exceed the cap of {cap}; refusing")
    lams = [realize(spec, inst.forecast, g) for g in enumerate_candidates(I, T, spec.budget, cap=cap)]
    model, vmap = models.build_master(inst, lams)
    res = solve(model, params)
    if not res.is_optimal:
        raise SolverError(f"oracle full solve failed: {res.status} {res.message}")
    return res.objective, models.extract_first_stage(vmap, res.values, inst)
