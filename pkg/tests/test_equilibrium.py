import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaygame.equilibrium import (ModelParams, aggregate_action, delta_single_stage,
                                   delta_slope_bound, delta_two_stage, dtau_dgamma,
                                   second_stage_policy, solve_single_stage, solve_threshold,
                                   solve_two_stage)
from delaygame.errors import ConsistencyError, DomainError, SolverError
from delaygame.gaussian import std_cdf

from conftest import brute_delta_single, brute_delta_two


@pytest.mark.parametrize("sigma", [0, -1.0, math.inf, math.nan])
def test_sigma_domain(sigma):
    with pytest.raises(DomainError):
        ModelParams(sigma, 0.5)


@pytest.mark.parametrize("gamma", [-0.1, 1.0, 1.5])
def test_gamma_domain(gamma):
    with pytest.raises(DomainError):
        ModelParams(0.5, gamma)


def test_population_domain():
    with pytest.raises(DomainError):
        ModelParams(0.5, 0.5, 1)
    assert ModelParams(0.5, 0.5, 10).is_finite
    assert not ModelParams(0.5, 0.5).is_finite


@pytest.mark.parametrize("tau,sigma,gamma", [(0.0, 0.5, 0.8), (1.2, 0.3, 0.2),
                                             (-1.0, 1.5, 0.5), (2.5, 2.0, 0.9)])
def test_delta_two_against_brute_force(tau, sigma, gamma):
    got = delta_two_stage(tau, ModelParams(sigma, gamma))
    assert got == pytest.approx(brute_delta_two(tau, sigma, gamma), abs=1e-8)


@pytest.mark.parametrize("tau,sigma", [(0.0, 0.5), (0.7, 0.1), (-2.0, 2.0)])
def test_delta_single_against_brute_force(tau, sigma):
    got = delta_single_stage(tau, ModelParams(sigma, 0.5))
    assert got == pytest.approx(brute_delta_single(tau, sigma), abs=1e-8)


def test_delta_two_limits():
    p = ModelParams(0.5, 0.8)
    # far left: theta is surely below 1, delta ~ (1-gamma)(1 - alpha tau)
    assert delta_two_stage(-20.0, p) == pytest.approx(0.2 * (1 + p.alpha * 20), rel=1e-9)
    assert delta_two_stage(30.0, p) < -20


def test_two_stage_root_and_residual():
    p = ModelParams(0.5, 0.8)
    sol = solve_two_stage(p)
    assert abs(delta_two_stage(sol.tau_star, p)) < 1e-9
    assert sol.unique and sol.sign_changes == 1
    assert sol.bracket[0] <= sol.tau_star <= sol.bracket[1]
    # frozen from an independent brentq on the brute-force integrand
    assert sol.tau_star == pytest.approx(0.549608148743, abs=1e-7)


def test_single_stage_symmetric_case():
    # at tau = 1/2 with sigma -> 0 the single-stage belief about participation is uniform
    assert solve_single_stage(ModelParams(0.01, 0.5)).tau_star == pytest.approx(0.5, abs=0.01)


def test_single_stage_ignores_gamma():
    a = solve_single_stage(ModelParams(0.7, 0.1)).tau_star
    b = solve_single_stage(ModelParams(0.7, 0.9)).tau_star
    assert a == b


def test_large_sigma_flags_nonunique():
    sol = solve_two_stage(ModelParams(3.0, 0.5))
    assert not sol.unique
    assert abs(sol.residual) < 1e-9


def test_solver_rejects_rootless_function():
    with pytest.raises(SolverError):
        solve_threshold(lambda t, p: 1.0 + t * t, ModelParams(0.5, 0.5))


def test_solver_flags_multiple_roots_inside_uniqueness_region():
    with pytest.raises(ConsistencyError):
        solve_threshold(lambda t, p: math.sin(20 * t) + 0.5, ModelParams(0.5, 0.5))


def test_slope_bound():
    p = ModelParams(0.5, 0.8)
    assert delta_slope_bound(p) == pytest.approx(max(-0.8 * 0.2, 0.8 * (0.5 / math.sqrt(2 * math.pi) - 1)))
    with pytest.raises(DomainError):
        delta_slope_bound(ModelParams(3.0, 0.5))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 2.45), st.floats(0.02, 0.98), st.floats(-4.0, 4.0))
def test_delta_slope_below_bound(sigma, gamma, tau):
    p = ModelParams(sigma, gamma)
    h = 1e-4
    slope = (delta_two_stage(tau + h, p) - delta_two_stage(tau - h, p)) / (2 * h)
    assert slope <= delta_slope_bound(p) + 1e-6


def test_dtau_dgamma_matches_resolve():
    p = ModelParams(0.5, 0.5)
    h = 1e-4
    fd = (solve_two_stage(p.with_gamma(0.5 + h)).tau_star
          - solve_two_stage(p.with_gamma(0.5 - h)).tau_star) / (2 * h)
    assert dtau_dgamma(p) == pytest.approx(fd, rel=1e-4)
    assert dtau_dgamma(p) < 0


def test_second_stage_policy_boundary():
    tau, sigma = 0.4, 0.5
    cut = std_cdf((tau - 1) / sigma)
    assert second_stage_policy(cut, tau, sigma) == 1
    assert second_stage_policy(np.nextafter(cut, 0), tau, sigma) == 0
    assert second_stage_policy(1.0, tau, sigma) == 1
    with pytest.raises(DomainError):
        second_stage_policy(1.5, tau, sigma)


def test_aggregate_action():
    assert aggregate_action(0.5, 0.0, 1.0) == 1.0
    assert aggregate_action(2.0, 0.0, 1.0) == pytest.approx(std_cdf(-2.0))
    np.testing.assert_allclose(aggregate_action(np.array([0.0, 3.0]), 0.0, 1.0),
                               [1.0, std_cdf(-3.0)])
