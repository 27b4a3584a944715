"""Uncertainty sets: realization, affine unrolling, enumeration, estimation."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgeplan import (
    DUSSpec,
    SUSSpec,
    enumerate_candidates,
    extreme_total_demand,
    fit_ar,
    fit_seasonal,
    realize,
    unroll_affine,
)
from edgeplan.uncertainty import (
    CandidateCapError,
    candidate_count,
    check_driver,
    sample_drivers,
    seasonal_curve,
)

# ---------------------------------------------------------------------------
# realize
# ---------------------------------------------------------------------------


def test_static_zero_driver_returns_forecast():
    spec = SUSSpec(amplitude=np.full((1, 1), 2.0), budget=1)
    lam = realize(spec, np.full((1, 1), 10.0), np.zeros((1, 1)))
    assert lam[0, 0] == 10.0


def test_dynamic_recursion_hand_value():
    # scalar, lag 1, own-weight 0.5, unit mixing, zero seed, drivers (1, 1):
    # deviations are 1 then 1.5
    spec = DUSSpec(lag=1, ar_coeffs=[[0.5]], mixing=[[1.0]], seed_residuals=[[0.0]], budget=1)
    forecast = np.array([[10.0, 20.0]])
    lam = realize(spec, forecast, np.array([[1.0, 1.0]]))
    assert lam == pytest.approx(np.array([[11.0, 21.5]]))


def test_dynamic_zero_driver_zero_seed_is_forecast():
    spec = DUSSpec(lag=2, ar_coeffs=[[0.5, 0.1]], mixing=[[1.0]], seed_residuals=[[0.0, 0.0]], budget=1)
    forecast = np.array([[10.0, 20.0, 30.0]])
    lam = realize(spec, forecast, np.zeros((1, 3)))
    assert lam == pytest.approx(forecast)


def test_seed_residuals_propagate_without_drivers():
    spec = DUSSpec(lag=1, ar_coeffs=[[0.5]], mixing=[[1.0]], seed_residuals=[[4.0]], budget=1)
    forecast = np.zeros((1, 3))
    lam = realize(spec, forecast, np.zeros((1, 3)))
    assert lam == pytest.approx(np.array([[2.0, 1.0, 0.5]]))


def test_budget_violation_rejected():
    spec = SUSSpec(amplitude=np.ones((2, 1)), budget=1)
    with pytest.raises(ValueError, match="budget"):
        realize(spec, np.ones((2, 1)), np.array([[1.0], [-1.0]]))


def test_dimension_mismatch_rejected():
    spec = SUSSpec(amplitude=np.ones((2, 2)), budget=2)
    with pytest.raises(ValueError, match="driver matrix"):
        realize(spec, np.ones((2, 2)), np.ones((2, 3)))


def test_clipping_floors_at_zero():
    spec = SUSSpec(amplitude=np.full((1, 1), 30.0), budget=1, clip_negative=True)
    lam = realize(spec, np.full((1, 1), 10.0), np.array([[-1.0]]))
    assert lam[0, 0] == 0.0


def test_vertex_flag_controls_admissible_entries():
    spec = SUSSpec(amplitude=np.ones((1, 1)), budget=1)
    with pytest.raises(ValueError):
        realize(spec, np.ones((1, 1)), np.array([[0.5]]))
    lam = realize(spec, np.ones((1, 1)), np.array([[0.5]]), vertex=False)
    assert lam[0, 0] == 1.5


# ---------------------------------------------------------------------------
# affine unrolling
# ---------------------------------------------------------------------------


def test_scalar_ar1_impulse_response_is_geometric():
    spec = DUSSpec(lag=1, ar_coeffs=[[0.5]], mixing=[[1.0]], seed_residuals=[[0.0]], budget=1)
    T = 4
    dmap = unroll_affine(spec, np.zeros((1, T)))
    for t in range(T):
        for tau in range(T):
            expected = 0.5 ** (t - tau) if tau <= t else 0.0
            assert dmap.psi[0, t, 0, tau] == pytest.approx(expected)


def test_memoryless_dynamic_reduces_to_per_period():
    spec = DUSSpec(
        lag=1,
        ar_coeffs=np.zeros((2, 1)),
        mixing=np.array([[3.0, 0.0], [1.0, 2.0]]),
        seed_residuals=np.zeros((2, 1)),
        budget=2,
    )
    forecast = np.arange(6, dtype=float).reshape(2, 3)
    dmap = unroll_affine(spec, forecast)
    assert np.array_equal(dmap.offset, forecast)
    for t in range(3):
        for tau in range(3):
            block = dmap.psi[:, t, :, tau]
            assert np.array_equal(block, spec.mixing if tau == t else np.zeros((2, 2)))


def test_affine_map_reproduces_realize_exhaustively():
    rng = np.random.default_rng(42)
    spec = DUSSpec(
        lag=2,
        ar_coeffs=rng.uniform(-0.4, 0.6, (2, 2)),
        mixing=rng.uniform(-1.0, 2.0, (2, 2)),
        seed_residuals=rng.uniform(-1.0, 1.0, (2, 2)),
        budget=1,
    )
    forecast = rng.uniform(10.0, 30.0, (2, 3))
    dmap = unroll_affine(spec, forecast)
    for g in enumerate_candidates(2, 3, 1):
        assert np.abs(dmap.realize(g) - realize(spec, forecast, g)).max() <= 1e-9


def test_affine_map_causality():
    rng = np.random.default_rng(3)
    spec = DUSSpec(
        lag=1,
        ar_coeffs=rng.uniform(0, 0.5, (3, 1)),
        mixing=rng.uniform(0, 1, (3, 3)),
        seed_residuals=np.zeros((3, 1)),
        budget=2,
    )
    dmap = unroll_affine(spec, np.zeros((3, 4)))
    for t in range(4):
        for tau in range(t + 1, 4):
            assert np.all(dmap.psi[:, t, :, tau] == 0.0)


def test_unroll_rejects_clipped_specs():
    spec = SUSSpec(amplitude=np.ones((1, 1)), budget=1, clip_negative=True)
    with pytest.raises(ValueError, match="clip"):
        unroll_affine(spec, np.ones((1, 1)))


# ---------------------------------------------------------------------------
# candidate enumeration
# ---------------------------------------------------------------------------


def test_candidate_counts_small_cases():
    assert len(list(enumerate_candidates(2, 1, 1))) == 5
    assert len(list(enumerate_candidates(2, 1, 2))) == 9
    assert len(list(enumerate_candidates(1, 2, 1))) == 9


def test_candidates_unique_and_within_budget():
    seen = set()
    for g in enumerate_candidates(2, 2, 1):
        check_driver(g, 2, 2, 1)
        key = g.tobytes()
        assert key not in seen
        seen.add(key)
    assert len(seen) == candidate_count(2, 2, 1) == 25


def test_cap_refusal():
    with pytest.raises(CandidateCapError):
        list(enumerate_candidates(6, 6, 3, cap=1000))


def test_budget_inclusion_property():
    small = {g.tobytes() for g in enumerate_candidates(3, 1, 1)}
    large = {g.tobytes() for g in enumerate_candidates(3, 1, 2)}
    assert small <= large


# ---------------------------------------------------------------------------
# extreme scenario
# ---------------------------------------------------------------------------


def test_extreme_static_picks_largest_amplitudes():
    spec = SUSSpec(amplitude=np.array([[2.0], [5.0]]), budget=1)
    forecast = np.array([[10.0], [8.0]])
    g, lam = extreme_total_demand(spec, forecast)
    assert g[1, 0] == 1.0 and g[0, 0] == 0.0
    assert lam.sum() == pytest.approx(23.0)


def test_extreme_zero_budget_returns_forecast():
    spec = SUSSpec(amplitude=np.ones((2, 2)), budget=0)
    forecast = np.full((2, 2), 7.0)
    g, lam = extreme_total_demand(spec, forecast)
    assert np.all(g == 0)
    assert lam.sum() == pytest.approx(forecast.sum())


def test_extreme_dynamic_positive_response_pushes_all_up():
    spec = DUSSpec(lag=1, ar_coeffs=[[0.5]], mixing=[[1.0]], seed_residuals=[[0.0]], budget=1)
    forecast = np.full((1, 2), 10.0)
    g, lam = extreme_total_demand(spec, forecast)
    assert np.all(g == 1.0)
    assert lam.sum() == pytest.approx(20.0 + 1.0 + 1.5)


def test_extreme_matches_enumeration():
    rng = np.random.default_rng(8)
    spec = DUSSpec(
        lag=1,
        ar_coeffs=rng.uniform(-0.5, 0.5, (2, 1)),
        mixing=rng.uniform(-2.0, 2.0, (2, 2)),
        seed_residuals=np.zeros((2, 1)),
        budget=1,
    )
    forecast = rng.uniform(5.0, 20.0, (2, 2))
    _, lam = extreme_total_demand(spec, forecast)
    best = max(realize(spec, forecast, g).sum() for g in enumerate_candidates(2, 2, 1))
    assert lam.sum() == pytest.approx(best)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10_000))
def test_monotone_realization_when_responses_nonnegative(seed):
    rng = np.random.default_rng(seed)
    spec = DUSSpec(
        lag=1,
        ar_coeffs=rng.uniform(0.0, 0.6, (2, 1)),
        mixing=rng.uniform(0.0, 2.0, (2, 2)),
        seed_residuals=np.zeros((2, 1)),
        budget=2,
    )
    forecast = rng.uniform(1.0, 5.0, (2, 2))
    g_lo = rng.integers(-1, 1, (2, 2)).astype(float)  # in {-1, 0}
    g_hi = np.minimum(g_lo + rng.integers(0, 2, (2, 2)), 1.0)
    assert np.all(realize(spec, forecast, g_lo) <= realize(spec, forecast, g_hi) + 1e-12)


def test_sampled_drivers_respect_budget():
    g = sample_drivers(4, 3, 2, n=50, seed=1)
    assert g.shape == (50, 4, 3)
    assert np.abs(g).max() <= 1.0
    assert (np.abs(g).sum(axis=1) <= 2.0 + 1e-9).all()


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------


def test_seasonal_fit_exact_on_noiseless_curve():
    phi = np.array([[5.0, 1.0, 0.0, 0.0, 0.0]])
    traces = seasonal_curve(phi, 300)
    fit = fit_seasonal(traces)
    assert fit.phi == pytest.approx(phi, abs=1e-8)
    assert np.abs(fit.residuals).max() <= 1e-8


def test_seasonal_fit_constant_trace():
    traces = np.full((288, 2), 7.0)
    fit = fit_seasonal(traces)
    assert fit.phi[:, 0] == pytest.approx(np.full(2, 7.0), abs=1e-8)
    assert np.abs(fit.phi[:, 1:]).max() <= 1e-8


def test_seasonal_fit_recovers_under_noise():
    rng = np.random.default_rng(123)
    phi = np.array([[5.0, 1.0, 0.5, -0.8, 0.3]])
    traces = seasonal_curve(phi, 2000) + rng.normal(0, 0.1, (2000, 1))
    fit = fit_seasonal(traces)
    assert np.abs((fit.phi - phi) / phi).max() <= 0.05


def test_seasonal_fit_needs_two_cycles():
    with pytest.raises(ValueError, match="cycles"):
        fit_seasonal(np.ones((100, 1)))


def test_seasonal_rank_deficient_design_is_flagged():
    fit = fit_seasonal(np.ones((300, 1)), period_lengths=(72, 72))
    assert fit.flagged == (0,)


def test_ar_fit_exact_geometric_series():
    series = (0.5 ** np.arange(40))[:, None]
    fit = fit_ar(series, 1)
    assert fit.ar_coeffs[0, 0] == pytest.approx(0.5, abs=1e-10)
    assert fit.seed_residuals[0, 0] == pytest.approx(series[-1, 0])


def test_ar_fit_recovers_synthetic_ar1():
    rng = np.random.default_rng(7)
    n = 2000
    series = np.zeros((n, 1))
    for t in range(1, n):
        series[t] = 0.6 * series[t - 1] + rng.normal()
    fit = fit_ar(series, 1)
    assert 0.55 <= fit.ar_coeffs[0, 0] <= 0.65


def test_ar_fit_cholesky_of_independent_areas():
    rng = np.random.default_rng(11)
    n = 3000
    innov = np.column_stack([rng.normal(0, 2.0, n), rng.normal(0, 1.0, n)])
    series = np.zeros((n, 2))
    for t in range(1, n):
        series[t] = 0.3 * series[t - 1] + innov[t]
    fit = fit_ar(series, 1)
    assert fit.mixing[0, 0] == pytest.approx(2.0, abs=0.1)
    assert fit.mixing[1, 1] == pytest.approx(1.0, abs=0.1)
    assert abs(fit.mixing[1, 0]) <= 0.1
    assert not fit.check()


def test_ar_fit_factor_reproduces_covariance():
    rng = np.random.default_rng(2)
    series = rng.normal(size=(500, 3))
    fit = fit_ar(series, 1)
    assert np.abs(fit.mixing @ fit.mixing.T - fit.sigma).max() <= 1e-8 * max(1.0, np.abs(fit.sigma).max())


def test_ar_fit_rejects_short_series():
    with pytest.raises(ValueError, match="periods"):
        fit_ar(np.ones((5, 2)), 1)


def test_ar_fit_rejects_nonfinite():
    bad = np.ones((100, 1))
    bad[3] = np.nan
    with pytest.raises(ValueError, match="finite"):
        fit_ar(bad, 1)


def test_arfit_json_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    series = rng.normal(size=(200, 2))
    fit = fit_ar(series, 2)
    path = tmp_path / "fit.json"
    fit.save(str(path))
    from edgeplan import ARFit

    again = ARFit.load(str(path))
    assert np.array_equal(again.ar_coeffs, fit.ar_coeffs)
    assert np.array_equal(again.mixing, fit.mixing)
    assert np.array_equal(again.seed_residuals, fit.seed_residuals)


def test_fit_generate_consistency():
    from edgeplan.scenario_gen import gen_demand_traces

    phi = np.array([[50.0, 5.0, 0.0, 0.0, 0.0]])
    csv_text = gen_demand_traces(1, 2000, phi, np.array([[0.5]]), np.array([[1.0]]), seed=9)
    rows = [ln.split(",") for ln in csv_text.strip().splitlines()[1:]]
    traces = np.array([[float(v) for v in r[1:]] for r in rows])
    seasonal = fit_seasonal(traces)
    fit = fit_ar(seasonal.residuals, 1)
    assert abs(fit.ar_coeffs[0, 0] - 0.5) <= 0.05
