import math

import numpy as np
import pandas as pd
import pytest

from hestonopt.core.errors import DomainError
from hestonopt.models.schemas import (
    EvaluationPoint,
    ExponentialUtility,
    GridSpec,
    HestonParams,
    PowerUtility,
)
from hestonopt.tools.heston_model import compute_psi, derive_constants
from hestonopt.tools.policy import (
    SURFACE_COLUMNS,
    asymptotic_log_derivative_ratio,
    asymptotic_value_factor,
    bellman,
    evaluate_surface,
    hedging_ratio_table,
    log_derivative_ratio,
    optimal_control,
    small_volvol_bellman,
    small_volvol_control,
    value_factor,
    value_factor_at_psi,
)

from conftest import oracle_log_ratio, oracle_value_factor, tau_for_psi


def test_value_factor_matches_oracle(exp_constants):
    got = value_factor_at_psi(exp_constants, 4.0)
    assert got == pytest.approx(oracle_value_factor(1.75, 2.0, 4.0), rel=1e-12)


def test_value_factor_near_horizon(exp_constants):
    assert value_factor_at_psi(exp_constants, 1e6) == pytest.approx(1.0, abs=1e-5)


def test_value_factor_depends_on_psi_only(params, exp_constants):
    psi = compute_psi(params, 0.16, 0.5)
    tau = tau_for_psi(params, 0.32, psi)
    assert value_factor(exp_constants, params, 0.32, tau) == pytest.approx(
        value_factor(exp_constants, params, 0.16, 0.5), rel=1e-12
    )


def test_value_factor_in_unit_interval(exp_constants, power_constants):
    for constants in (exp_constants, power_constants):
        values = np.array([value_factor_at_psi(constants, p) for p in np.geomspace(1e-4, 1e5, 60)])
        assert np.all(values > 0) and np.all(values <= 1.0 + 1e-12)


@pytest.mark.parametrize("v,tau", [(0.16, 0.5), (0.05, 1.0), (0.4, 2.0)])
def test_log_derivative_matches_oracle(params, exp_constants, v, tau):
    psi = compute_psi(params, v, tau)
    got = log_derivative_ratio(exp_constants, v, psi)
    assert got == pytest.approx(oracle_log_ratio(params, exp_constants, v, tau), rel=1e-8)


def test_log_derivative_domain(exp_constants):
    with pytest.raises(DomainError):
        log_derivative_ratio(exp_constants, 0.0, 1.0)
    with pytest.raises(DomainError):
        log_derivative_ratio(exp_constants, 0.1, 0.0)


def test_log_derivative_far_tail(exp_constants):
    psi = 1e10
    expected = exp_constants.alpha * (exp_constants.kummer_a - 1.0) / psi
    assert log_derivative_ratio(exp_constants, 1.0, psi) == pytest.approx(expected, rel=1e-12)


def test_bellman_at_horizon(params, power_constants, exp_constants):
    point = EvaluationPoint(w=2.0, v=0.16, t=1.0, T=1.0)
    assert bellman(point, PowerUtility(gamma=-1.0), power_constants, params) == pytest.approx(-0.5)
    point = EvaluationPoint(w=0.0, v=0.16, t=1.0, T=1.0)
    assert bellman(point, ExponentialUtility(c=1.0), exp_constants, params) == pytest.approx(0.0)


def test_bellman_below_utility(params, power_utility, power_constants):
    # f <= 1 and gamma < 0 make J_P at least the terminal utility
    point = EvaluationPoint(w=1.5, v=0.16, T=1.0)
    assert bellman(point, power_utility, power_constants, params) >= small_volvol_bellman(point, power_utility)


def test_zero_correlation_is_myopic():
    params = HestonParams(mu=0.1, k=1.0, theta=0.04, sigma=0.2, rho=0.0)
    utility = PowerUtility(gamma=-1.0)
    constants = derive_constants(params, utility)
    out = optimal_control(EvaluationPoint(w=1.0, v=0.04, T=1.0), utility, constants, params)
    assert out.control == pytest.approx(1.25, rel=1e-14)
    assert out.hedging_term == 0.0


def test_exponential_control_ignores_wealth(params, exp_utility, exp_constants):
    controls = [
        optimal_control(EvaluationPoint(w=w, v=0.16, T=1.0), exp_utility, exp_constants, params).control
        for w in (-3.0, 0.0, 5.0)
    ]
    assert controls[0] == controls[1] == controls[2]


def test_power_control_scales_with_wealth(params, power_utility, power_constants):
    one = optimal_control(EvaluationPoint(w=1.0, v=0.16, T=1.0), power_utility, power_constants, params)
    three = optimal_control(EvaluationPoint(w=3.0, v=0.16, T=1.0), power_utility, power_constants, params)
    assert three.control == pytest.approx(3.0 * one.control, rel=1e-14)


def test_control_decomposition(params, power_utility, power_constants):
    out = optimal_control(EvaluationPoint(w=1.0, x=2.0, v=0.1, T=0.7), power_utility, power_constants, params)
    assert out.control == pytest.approx(out.myopic_term + out.hedging_term, rel=1e-15)
    assert out.myopic_term == pytest.approx(1.0 / (2.0 * 2.0) * 0.2 / 0.1)


@pytest.mark.parametrize("rho,sign", [(0.5, 1.0), (-0.5, -1.0)])
def test_hedging_sign_follows_correlation(rho, sign, exp_utility):
    params = HestonParams(mu=0.2, k=1.0, theta=0.16, sigma=0.4, rho=rho)
    constants = derive_constants(params, exp_utility)
    assert constants.alpha > 0
    out = optimal_control(EvaluationPoint(w=0.0, v=0.16, T=1.0), exp_utility, constants, params)
    assert math.copysign(1.0, out.hedging_term) == sign


def test_control_at_horizon(params, exp_utility, exp_constants):
    out = optimal_control(EvaluationPoint(w=1.0, v=0.16, t=2.0, T=2.0), exp_utility, exp_constants, params)
    assert out.f == 1.0
    assert out.psi is None
    assert out.hedging_term == 0.0
    assert out.control == pytest.approx(0.2 / 0.16)


def test_power_requires_positive_wealth(params, power_utility, power_constants):
    with pytest.raises(DomainError):
        optimal_control(EvaluationPoint(w=0.0, v=0.16, T=1.0), power_utility, power_constants, params)


def test_small_psi_asymptotes(exp_constants):
    psi, v = 1e-4, 0.2
    assert asymptotic_value_factor(exp_constants, psi, "small") == pytest.approx(
        value_factor_at_psi(exp_constants, psi), rel=1e-3
    )
    assert asymptotic_log_derivative_ratio(exp_constants, v, psi, "small") == pytest.approx(
        log_derivative_ratio(exp_constants, v, psi), rel=1e-3
    )


def test_large_psi_asymptotes(exp_constants):
    psi, v = 1e4, 0.2
    assert asymptotic_value_factor(exp_constants, psi, "large") == pytest.approx(
        value_factor_at_psi(exp_constants, psi), rel=1e-3
    )
    assert asymptotic_log_derivative_ratio(exp_constants, v, psi, "large") == pytest.approx(
        log_derivative_ratio(exp_constants, v, psi), rel=1e-3
    )


@pytest.mark.parametrize("psi,regime", [(1.0, "small"), (1.0, "large"), (0.0, "small"), (1.0, "medium")])
def test_asymptote_regime_checks(exp_constants, psi, regime):
    with pytest.raises(DomainError):
        asymptotic_value_factor(exp_constants, psi, regime)


def test_small_volvol_exact_without_correlation(exp_utility):
    params = HestonParams(mu=0.1, k=2.0, theta=0.2, sigma=0.3, rho=0.0)
    constants = derive_constants(params, exp_utility)
    point = EvaluationPoint(w=0.0, v=0.2, T=0.5)
    assert small_volvol_control(point, exp_utility, params) == pytest.approx(
        optimal_control(point, exp_utility, constants, params).control, rel=1e-15
    )


def test_small_volvol_close_to_closed_form(exp_utility):
    params = HestonParams(mu=0.1, k=2.0, theta=0.2, sigma=0.01, rho=0.5)
    constants = derive_constants(params, exp_utility)
    point = EvaluationPoint(w=0.0, v=0.2, T=0.5)
    closed = optimal_control(point, exp_utility, constants, params).control
    assert small_volvol_control(point, exp_utility, params) == pytest.approx(closed, rel=1e-2)


def test_small_volvol_correction_grows_with_horizon(exp_utility):
    params = HestonParams(mu=0.1, k=2.0, theta=0.2, sigma=0.01, rho=0.5)
    myopic = 0.1 / 0.2
    near = small_volvol_control(EvaluationPoint(w=0.0, v=0.2, T=0.5), exp_utility, params) - myopic
    far = small_volvol_control(
        EvaluationPoint(w=0.0, v=0.2, T=0.5 + math.log(2.0) / params.k), exp_utility, params
    ) - myopic
    assert far == pytest.approx(2.0 * near, rel=1e-10)


def test_small_volvol_bellman_is_utility():
    point = EvaluationPoint(w=2.0, v=0.1, T=1.0)
    assert small_volvol_bellman(point, PowerUtility(gamma=-1.0)) == pytest.approx(-0.5)
    assert small_volvol_bellman(point, ExponentialUtility(c=1.0)) == pytest.approx(1.0 - math.exp(-2.0))


def test_power_bracket_tends_to_exponential(params):
    gamma = -1e6
    point = EvaluationPoint(w=1.0, v=0.16, T=1.0)
    power = PowerUtility(gamma=gamma)
    exp = ExponentialUtility(c=1.0)
    p_out = optimal_control(point, power, derive_constants(params, power), params)
    e_out = optimal_control(point, exp, derive_constants(params, exp), params)
    assert p_out.control * (1.0 - gamma) == pytest.approx(e_out.control, rel=1e-4)


def test_hedging_table_matches_direct(exp_constants):
    table = hedging_ratio_table(exp_constants)
    psi = np.geomspace(2e-6, 5e5, 97)
    direct = np.array([log_derivative_ratio(exp_constants, 1.0, p) for p in psi])
    assert np.allclose(table(psi), direct, rtol=1e-5, atol=1e-12)


def test_hedging_table_outside_band(exp_constants):
    table = hedging_ratio_table(exp_constants)
    out = table(np.array([1e-9, 1e9, np.inf]))
    alpha, a = exp_constants.alpha, exp_constants.kummer_a
    assert out[0] == alpha
    assert out[1] == pytest.approx(alpha * (a - 1.0) / 1e9)
    assert out[2] == 0.0


def test_surface_layout(params, exp_utility, exp_constants):
    grid = GridSpec(n_v=16, n_tau=16, tau_max=1.0)
    frame = evaluate_surface(params, exp_utility, exp_constants, grid)
    assert list(frame.columns) == SURFACE_COLUMNS
    assert len(frame) == 17 * 17
    assert frame["tau"].is_monotonic_increasing
    horizon = frame[frame["tau"] == 0.0]
    assert np.all(horizon["f"] == 1.0) and np.all(horizon["control_hedging"] == 0.0)
    assert np.allclose(frame["control_total"], frame["control_myopic"] + frame["control_hedging"])


def test_surface_zero_correlation_has_no_hedging(exp_utility):
    params = HestonParams(mu=0.2, k=1.0, theta=0.16, sigma=0.4, rho=0.0)
    constants = derive_constants(params, exp_utility)
    frame = evaluate_surface(params, exp_utility, constants, GridSpec(n_v=16, n_tau=16))
    assert np.all(frame["control_hedging"] == 0.0)


@pytest.mark.parametrize("workers", [4, 16])
def test_surface_independent_of_workers(params, power_utility, power_constants, workers):
    grid = GridSpec(n_v=16, n_tau=20, tau_max=2.0)
    serial = evaluate_surface(params, power_utility, power_constants, grid, w=2.0, workers=1)
    parallel = evaluate_surface(params, power_utility, power_constants, grid, w=2.0, workers=workers)
    pd.testing.assert_frame_equal(serial, parallel, check_exact=True)
