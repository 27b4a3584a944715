"""Demand uncertainty sets, driver enumeration, and time-series estimation.

Two set families describe how realized demand may deviate from the forecast:

* a static per-period set where each area's demand moves within a fixed
  amplitude band, and
* a dynamic set where deviations follow a vector autoregression driven by a
  spatial mixing matrix, so a shock in one area propagates across areas and
  forward in time.

Both are steered by signed per-area drivers ``g`` with a per-period budget on
how many areas may deviate.  Worst-case search operates on the vertex
restriction ``g in {-1, 0, +1}``: with integer recourse downstream the
recourse value is not concave in demand, so the vertex set is the defined
semantics rather than the continuous polytope.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations, product

import numpy as np

from . import solver as sv

DRIVER_TOL = 1e-9
AFFINE_TOL = 1e-9


class CandidateCapError(RuntimeError):
    """Enumeration would exceed the configured cap; refused, never sampled."""


@dataclass(frozen=True)
class SUSSpec:
    """Static set: demand[i,t] = forecast[i,t] + g[i,t] * amplitude[i,t]."""

    amplitude: np.ndarray  # (I, T) requests
    budget: int
    clip_negative: bool = False

    def __post_init__(self):
        a = np.asarray(self.amplitude, dtype=float).copy()
        a.setflags(write=False)
        object.__setattr__(self, "amplitude", a)
        object.__setattr__(self, "budget", int(self.budget))

    def check(self, I: int, T: int) -> list[str]:
        out = []
        if self.amplitude.shape != (I, T):
            out.append(f"amplitude must be ({I}, {T}), got {self.amplitude.shape}")
        elif (self.amplitude < 0).any():
            out.append("amplitude must be nonnegative")
        if not 0 <= self.budget <= I:
            out.append(f"budget must be an integer in [0, {I}], got {self.budget}")
        return out


@dataclass(frozen=True)
class DUSSpec:
    """Dynamic set: deviations follow a lag-``lag`` autoregression.

    ``ar_coeffs[i, s-1]`` weights area ``i``'s own deviation ``s`` periods
    back; ``mixing`` maps the driver vector of one period to the innovation
    across areas (full I x I so spatially correlated shocks are expressible;
    a diagonal matrix recovers the per-area special case).
    ``seed_residuals[:, k]`` is the pre-horizon deviation ``k`` periods before
    the first planning period (column 0 = most recent).
    """

    lag: int
    ar_coeffs: np.ndarray  # (I, lag)
    mixing: np.ndarray  # (I, I)
    seed_residuals: np.ndarray  # (I, lag)
    budget: int
    clip_negative: bool = False

    def __post_init__(self):
        for name in ("ar_coeffs", "mixing", "seed_residuals"):
            a = np.atleast_2d(np.asarray(getattr(self, name), dtype=float)).copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        object.__setattr__(self, "lag", int(self.lag))
        object.__setattr__(self, "budget", int(self.budget))

    def check(self, I: int, T: int) -> list[str]:
        out = []
        if self.lag < 1:
            out.append("lag must be >= 1")
        if self.ar_coeffs.shape != (I, self.lag):
            out.append(f"ar_coeffs must be ({I}, {self.lag}), got {self.ar_coeffs.shape}")
        if self.mixing.shape != (I, I):
            out.append(f"mixing must be ({I}, {I}), got {self.mixing.shape}")
        if self.seed_residuals.shape != (I, self.lag):
            out.append(f"seed_residuals must be ({I}, {self.lag}), got {self.seed_residuals.shape}")
        if not 0 <= self.budget <= I:
            out.append(f"budget must be an integer in [0, {I}], got {self.budget}")
        return out


def check_driver(g: np.ndarray, I: int, T: int, budget: int, vertex: bool = True) -> None:
    """Validate a driver matrix against the box and per-period budget."""
    g = np.asarray(g, dtype=float)
    if g.shape != (I, T):
        raise ValueError(f"driver matrix must be ({I}, {T}), got {g.shape}")
    if vertex:
        if not np.isin(g, (-1.0, 0.0, 1.0)).all():
            raise ValueError("vertex drivers must take values in {-1, 0, +1}")
    elif (np.abs(g) > 1.0 + DRIVER_TOL).any():
        raise ValueError("drivers must lie in [-1, 1]")
    used = np.abs(g).sum(axis=0)
    if (used > budget + DRIVER_TOL).any():
        t = int(np.argmax(used))
        raise ValueError(f"per-period budget {budget} exceeded at t={t}: {used[t]:.6g}")


def realize(
    spec: SUSSpec | DUSSpec,
    forecast: np.ndarray,
    g: np.ndarray,
    vertex: bool = True,
) -> np.ndarray:
    """Demand matrix induced by driver ``g``.

    Static specs scale drivers by the amplitude elementwise; dynamic specs run
    the deviation recursion seeded by the spec's pre-horizon residuals.  When
    ``spec.clip_negative`` is set the result is floored at zero.
    """
    forecast = np.asarray(forecast, dtype=float)
    I, T = forecast.shape
    g = np.asarray(g, dtype=float)
    check_driver(g, I, T, spec.budget, vertex=vertex)
    if isinstance(spec, SUSSpec):
        lam = forecast + g * spec.amplitude
    else:
        lam = forecast + _dus_residuals(spec, g, seeded=True)
    if spec.clip_negative:
        lam = np.maximum(lam, 0.0)
    return lam


def _dus_residuals(spec: DUSSpec, g: np.ndarray, seeded: bool) -> np.ndarray:
    I, T = g.shape
    L = spec.lag
    res = np.zeros((I, T))
    for t in range(T):
        acc = spec.mixing @ g[:, t]
        for s in range(1, L + 1):
            back = t - s
            if back >= 0:
                prev = res[:, back]
            elif seeded:
                prev = spec.seed_residuals[:, -back - 1]
            else:
                continue
            acc = acc + spec.ar_coeffs[:, s - 1] * prev
        res[:, t] = acc
    return res


@dataclass(frozen=True)
class AffineDemandMap:
    """Explicit affine demand-from-drivers map: unrolled deviation recursion.

    ``offset[i,t]`` is the forecast plus the zero-driver propagation of the
    seed residuals; ``psi[i,t,k,tau]`` is the response of demand at ``(i,t)``
    to driver ``(k,tau)`` and vanishes for ``tau > t`` (causality).  The map
    reproduces :func:`realize` exactly on every admissible driver matrix.
    """

    offset: np.ndarray  # (I, T)
    psi: np.ndarray  # (I, T, I, T)

    def __post_init__(self):
        for name in ("offset", "psi"):
            a = np.asarray(getattr(self, name), dtype=float).copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def dims(self) -> tuple[int, int]:
        return self.offset.shape

    def realize(self, g: np.ndarray) -> np.ndarray:
        return self.offset + np.einsum("itkl,kl->it", self.psi, np.asarray(g, dtype=float))

    def total_demand_coeffs(self) -> np.ndarray:
        """Coefficient of each driver in the total-demand objective."""
        return np.einsum("itkl->kl", self.psi)


def unroll_affine(spec: SUSSpec | DUSSpec, forecast: np.ndarray) -> AffineDemandMap:
    """Unroll the spec into an :class:`AffineDemandMap`.

    For static specs the map is memoryless (diagonal responses equal to the
    amplitudes).  Clipping cannot be represented affinely, so specs with
    ``clip_negative`` are rejected here.
    """
    forecast = np.asarray(forecast, dtype=float)
    I, T = forecast.shape
    if spec.clip_negative:
        raise ValueError("affine unrolling is undefined for clipped demand; disable clip_negative")
    psi = np.zeros((I, T, I, T))
    if isinstance(spec, SUSSpec):
        idx = np.arange(I)
        for t in range(T):
            psi[idx, t, idx, t] = spec.amplitude[:, t]
        return AffineDemandMap(forecast, psi)

    # impulse responses: phi_0 = 1, phi_k[i] = sum_s A[i,s] * phi_{k-s}[i]
    L = spec.lag
    phi = np.zeros((T, I))
    phi[0] = 1.0
    for k in range(1, T):
        for s in range(1, min(k, L) + 1):
            phi[k] += spec.ar_coeffs[:, s - 1] * phi[k - s]
    for t in range(T):
        for tau in range(t + 1):
            psi[:, t, :, tau] = phi[t - tau][:, None] * spec.mixing
    offset = forecast + _dus_residuals(spec, np.zeros((I, T)), seeded=True)
    return AffineDemandMap(offset, psi)


# ---------------------------------------------------------------------------
# Vertex candidate enumeration and extreme scenarios
# ---------------------------------------------------------------------------


def per_period_candidate_count(I: int, budget: int) -> int:
    return sum(math.comb(I, k) * 2**k for k in range(budget + 1))


def candidate_count(I: int, T: int, budget: int) -> int:
    return per_period_candidate_count(I, budget) ** T


def _period_vectors(I: int, budget: int) -> list[np.ndarray]:
    out = [np.zeros(I)]
    for k in range(1, budget + 1):
        for areas in combinations(range(I), k):
            for signs in product((1.0, -1.0), repeat=k):
                v = np.zeros(I)
                v[list(areas)] = signs
                out.append(v)
    return out


def enumerate_candidates(I: int, T: int, budget: int, cap: int = 100_000):
    """Yield every vertex driver matrix (no duplicates, deterministic order).

    Refuses (raises :class:`CandidateCapError`) when the count exceeds ``cap``
    rather than silently sampling.
    """
    if budget > I:
        raise ValueError(f"budget {budget} exceeds area count {I}")
    n = candidate_count(I, T, budget)
    if n > cap:
        raise CandidateCapError(
            f"{n} candidates exceed the cap of {cap}; refusing to enumerate"
        )
    vectors = _period_vectors(I, budget)
    for cols in product(vectors, repeat=T):
        yield np.column_stack(cols)


def extreme_total_demand(
    spec: SUSSpec | DUSSpec, forecast: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vertex driver maximizing total demand, with its realized matrix.

    Solved as a small MILP over split drivers with the total-demand objective
    taken from the affine map; the per-period budget makes the optimum the
    greedy sign-of-coefficient choice, which tests exploit as an oracle.
    The search always runs on the unclipped map (clipping only matters for
    trace generation, not for worst-case planning).
    """
    forecast = np.asarray(forecast, dtype=float)
    I, T = forecast.shape
    dmap = unroll_affine(_unclipped(spec) if spec.clip_negative else spec, forecast)
    coeffs = dmap.total_demand_coeffs()
    m = sv.LinearModel("peak_demand", sense="max")
    for t in range(T):
        for i in range(I):
            m.add_var(f"gp[{i},{t}]", 0.0, 1.0, integer=True, obj=coeffs[i, t])
            m.add_var(f"gm[{i},{t}]", 0.0, 1.0, integer=True, obj=-coeffs[i, t])
            m.add_constr(f"pair[{i},{t}]", {f"gp[{i},{t}]": 1.0, f"gm[{i},{t}]": 1.0}, "<=", 1.0)
        m.add_constr(
            f"budget[{t}]",
            {f"g{sgn}[{i},{t}]": 1.0 for i in range(I) for sgn in "pm"},
            "<=",
            float(spec.budget),
        )
    m.offset = float(dmap.offset.sum())
    res = sv.solve(m)
    if not res.is_optimal:
        raise sv.SolverError(f"peak-demand search failed: {res.status} {res.message}")
    g = np.zeros((I, T))
    for t in range(T):
        for i in range(I):
            g[i, t] = res.values[f"gp[{i},{t}]"] - res.values[f"gm[{i},{t}]"]
    return g, realize(spec, forecast, g)


def _unclipped(spec):
    if isinstance(spec, SUSSpec):
        return SUSSpec(spec.amplitude, spec.budget, clip_negative=False)
    return DUSSpec(spec.lag, spec.ar_coeffs, spec.mixing, spec.seed_residuals, spec.budget, False)


def sample_drivers(I: int, T: int, budget: int, n: int, seed: int) -> np.ndarray:
    """Continuous in-set driver samples (n, I, T) for out-of-sample evaluation.

    Uniform box draws, rescaled per period onto the budget simplex whenever
    the budget is exceeded.
    """
    rng = np.random.default_rng(seed)
    g = rng.uniform(-1.0, 1.0, size=(n, I, T))
    used = np.abs(g).sum(axis=1, keepdims=True)
    scale = np.minimum(1.0, budget / np.maximum(used, 1e-300))
    return g * scale


# ---------------------------------------------------------------------------
# Estimation from historical traces
# ---------------------------------------------------------------------------

DEFAULT_PERIODS = (72, 36)  # daily and semi-daily cycles of 20-minute slots


def seasonal_design(n: int, period_lengths: tuple[int, int] = DEFAULT_PERIODS) -> np.ndarray:
    """Regression basis: intercept plus one cosine/sine pair per cycle length."""
    t = np.arange(n, dtype=float)
    p1, p2 = period_lengths
    return np.column_stack(
        [
            np.ones(n),
            np.cos(2 * np.pi * t / p1),
            np.sin(2 * np.pi * t / p1),
            np.cos(2 * np.pi * t / p2),
            np.sin(2 * np.pi * t / p2),
        ]
    )


def seasonal_curve(phi: np.ndarray, n: int, period_lengths: tuple[int, int] = DEFAULT_PERIODS) -> np.ndarray:
    """Forecast curve (n, I) implied by coefficients ``phi`` (I, 5)."""
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    return seasonal_design(n, period_lengths) @ phi.T


@dataclass(frozen=True)
class SeasonalFit:
    phi: np.ndarray  # (I, 5)
    residuals: np.ndarray  # (n, I)
    flagged: tuple[int, ...] = ()  # areas whose fit came from a rank-deficient design


def fit_seasonal(
    traces: np.ndarray, period_lengths: tuple[int, int] = DEFAULT_PERIODS
) -> SeasonalFit:
    """Least-squares seasonal fit per area; residuals = trace - fitted curve."""
    traces = np.atleast_2d(np.asarray(traces, dtype=float))
    if traces.ndim != 2:
        raise ValueError("traces must be (n_periods, n_areas)")
    n, I = traces.shape
    if n < 2 * max(period_lengths):
        raise ValueError(
            f"need at least two full cycles ({2 * max(period_lengths)} periods), got {n}"
        )
    X = seasonal_design(n, period_lengths)
    coef, _, rank, _ = np.linalg.lstsq(X, traces, rcond=None)
    flagged = tuple(range(I)) if rank < X.shape[1] else ()
    residuals = traces - X @ coef
    return SeasonalFit(coef.T, residuals, flagged)


@dataclass(frozen=True)
class ARFit:
    """Estimated dynamic-uncertainty parameters.

    ``mixing`` is the lower-triangular Cholesky factor of the innovation
    covariance, so ``mixing @ mixing.T`` recovers ``sigma`` up to jitter.
    """

    phi: np.ndarray  # (I, 5) seasonal coefficients (zeros when unknown)
    ar_coeffs: np.ndarray  # (I, L)
    mixing: np.ndarray  # (I, I)
    seed_residuals: np.ndarray  # (I, L), column 0 most recent
    sigma: np.ndarray  # (I, I) innovation covariance
    rsquared: np.ndarray  # (I,) lag-regression goodness of fit

    @property
    def lag(self) -> int:
        return self.ar_coeffs.shape[1]

    def check(self, tol: float = 1e-8) -> list[str]:
        out = []
        scale = max(1.0, float(np.abs(self.sigma).max()))
        if np.abs(self.mixing @ self.mixing.T - self.sigma).max() > tol * scale + 1e-9:
            out.append("mixing @ mixing.T does not reproduce sigma")
        if np.abs(self.sigma - self.sigma.T).max() > 1e-12:
            out.append("sigma must be symmetric")
        return out

    def dus_spec(self, budget: int, clip_negative: bool = False) -> DUSSpec:
        return DUSSpec(
            lag=self.lag,
            ar_coeffs=self.ar_coeffs,
            mixing=self.mixing,
            seed_residuals=self.seed_residuals,
            budget=budget,
            clip_negative=clip_negative,
        )

    def to_json(self) -> dict:
        return {
            "phi": self.phi.tolist(),
            "A": self.ar_coeffs.tolist(),
            "B": self.mixing.tolist(),
            "seed": self.seed_residuals.tolist(),
            "Sigma": self.sigma.tolist(),
            "rsquared": self.rsquared.tolist(),
        }

    @staticmethod
    def from_json(doc: dict) -> "ARFit":
        return ARFit(
            phi=np.asarray(doc["phi"], dtype=float),
            ar_coeffs=np.asarray(doc["A"], dtype=float),
            mixing=np.asarray(doc["B"], dtype=float),
            seed_residuals=np.asarray(doc["seed"], dtype=float),
            sigma=np.asarray(doc["Sigma"], dtype=float),
            rsquared=np.asarray(doc.get("rsquared", np.zeros(len(doc["A"]))), dtype=float),
        )

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")

    @staticmethod
    def load(path: str) -> "ARFit":
        with open(path, "r", encoding="utf-8") as fh:
            return ARFit.from_json(json.load(fh))


def _chol_with_jitter(sigma: np.ndarray) -> np.ndarray:
    I = sigma.shape[0]
    trace = float(np.trace(sigma))
    if trace <= 1e-300:
        return np.zeros_like(sigma)
    jitter = 1e-10 * trace / I
    for _ in range(7):
        try:
            return np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            sigma = sigma + jitter * np.eye(I)
            jitter *= 100
    raise np.linalg.LinAlgError("covariance not factorizable even with jitter")


def fit_ar(residuals: np.ndarray, lag: int, phi: np.ndarray | None = None) -> ARFit:
    """Per-area lag regression plus cross-area innovation covariance.

    The mixing matrix is the (lower) Cholesky factor of the sample innovation
    covariance; seed residuals are the last ``lag`` observations so a spec
    built from the fit continues the history seamlessly.
    """
    residuals = np.atleast_2d(np.asarray(residuals, dtype=float))
    n, I = residuals.shape
    if lag < 1:
        raise ValueError("lag must be >= 1")
    if n < 10 * lag * I:
        raise ValueError(f"need at least {10 * lag * I} periods for lag {lag} and {I} areas, got {n}")
    if not np.isfinite(residuals).all():
        raise ValueError("residual series contains non-finite values")

    A = np.zeros((I, lag))
    innov = np.zeros((n - lag, I))
    rsq = np.zeros(I)
    for i in range(I):
        y = residuals[lag:, i]
        X = np.column_stack([residuals[lag - s : n - s, i] for s in range(1, lag + 1)])
        coef, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
        A[i] = coef
        innov[:, i] = y - X @ coef
        denom = float(np.var(y))
        rsq[i] = 1.0 - float(np.var(innov[:, i])) / denom if denom > 0 else 1.0

    if innov.shape[0] < 2:
        sigma = np.zeros((I, I))
    else:
        sigma = np.atleast_2d(np.cov(innov, rowvar=False))
    sigma = (sigma + sigma.T) / 2.0
    B = _chol_with_jitter(sigma)
    seeds = residuals[-1 : -lag - 1 : -1, :].T  # (I, lag), most recent first
    return ARFit(
        phi=np.zeros((I, 5)) if phi is None else np.asarray(phi, dtype=float),
        ar_coeffs=A,
        mixing=B,
        seed_residuals=seeds,
        sigma=sigma,
        rsquared=rsq,
    )
