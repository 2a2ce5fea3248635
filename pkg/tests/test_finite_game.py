import math

import numpy as np
import pytest
from scipy import integrate, stats

from delaygame.equilibrium import ModelParams, delta_single_stage, solve_single_stage
from delaygame.errors import DomainError, UnidentifiedFundamentalError
from delaygame.finite_game import (ThresholdPolicy, best_response_iteration,
                                   best_response_lambda, finite_posterior_expectation,
                                   first_stage_net_gain, recovered_fundamental,
                                   replication_seeds, second_stage_net_utility,
                                   simulate_round, single_stage_net_gain,
                                   solve_single_stage_finite, summary_records, trace_records)
from delaygame.verify import ORACLE_POINTS, mc_first_stage, mc_second_stage


def brute_posterior_mean(y, c, m, tau, sigma):
    a = 1 / (1 + sigma**2)
    mean, sd = a * y, math.sqrt(a) * sigma

    def dens(t):
        p = stats.norm.cdf((tau - t) / sigma)
        return stats.binom.pmf(c, m, p) * stats.norm.pdf(t, mean, sd)

    lo, hi = mean - 12 * sd, mean + 12 * sd
    z = integrate.quad(dens, lo, hi, points=[tau], epsabs=1e-14, limit=200)[0]
    return integrate.quad(lambda t: t * dens(t), lo, hi, points=[tau], epsabs=1e-14,
                          limit=200)[0] / z


def test_policy_validation():
    with pytest.raises(DomainError):
        ThresholdPolicy(0.0, [0.0, 1.0])
    with pytest.raises(DomainError):
        ThresholdPolicy(math.nan, [0.0, 1.0, 2.0])
    pol = ThresholdPolicy.constant(0.3, -1.0, 4)
    assert pol.population == 4 and pol.lambda_at(0.5) == -1.0
    with pytest.raises(DomainError):
        pol.lambda_at(0.3)


def test_limit_policy():
    pol = ThresholdPolicy.limit(0.5, 0.5, 10)
    cut = stats.norm.cdf(-1.0)
    s = np.arange(11) / 10
    np.testing.assert_array_equal(np.isposinf(pol.lam), s >= cut)


@pytest.mark.parametrize("y,s,tau,sigma,n", [(0.4, 1 / 2, 0.2, 0.6, 2), (1.0, 1 / 3, 0.5, 0.5, 3),
                                            (-0.5, 4 / 5, 0.0, 1.0, 5)])
def test_posterior_mean_against_quadpack(y, s, tau, sigma, n):
    p = ModelParams(sigma, 0.5, n)
    got = finite_posterior_expectation(lambda t: t, y, s, tau, p)
    c = round(s * n) - int(y <= tau)
    assert got == pytest.approx(brute_posterior_mean(y, c, n - 1, tau, sigma), abs=1e-9)


def test_posterior_impossible_count():
    p = ModelParams(0.5, 0.5, 3)
    with pytest.raises(DomainError):
        finite_posterior_expectation(lambda t: t, -1.0, 0.0, 0.0, p)  # own action makes k >= 1


def test_posterior_concentrates_on_inversion():
    n, tau, sigma = 100_000, 0.0, 1.0
    p = ModelParams(sigma, 0.5, n)
    s = 0.3
    got = finite_posterior_expectation(lambda t: t, 2.0, s, tau, p)
    assert got == pytest.approx(recovered_fundamental(s, tau, sigma), abs=5e-3)


def test_recovered_fundamental():
    assert recovered_fundamental(0.5, 0.3, 2.0) == pytest.approx(0.3)
    with pytest.raises(UnidentifiedFundamentalError) as e:
        recovered_fundamental(0.0, 0.0, 1.0)
    assert e.value.bound == math.inf
    with pytest.raises(UnidentifiedFundamentalError) as e:
        recovered_fundamental(1.0, 0.0, 1.0)
    assert e.value.bound == -math.inf


@pytest.mark.parametrize("point", ORACLE_POINTS[:2])
def test_second_stage_against_monte_carlo(point):
    sigma, gamma, tau, lam, y, k = point
    pol = ThresholdPolicy(tau, np.array(lam))
    rng = np.random.default_rng(7)
    m, se = mc_second_stage(y, k, pol, sigma, 3, 200_000, rng)
    got = second_stage_net_utility(y, k / 3, pol, ModelParams(sigma, gamma, 3))
    assert abs(got - m) < 4 * se


@pytest.mark.parametrize("point", ORACLE_POINTS[2:4])
def test_first_stage_against_monte_carlo(point):
    sigma, gamma, tau, lam, y, _ = point
    pol = ThresholdPolicy(tau, np.array(lam))
    rng = np.random.default_rng(11)
    m, se = mc_first_stage(y, pol, sigma, gamma, 3, 400_000, rng)
    got = first_stage_net_gain(y, pol, ModelParams(sigma, gamma, 3))
    assert abs(got - m) < 4 * se


def test_second_stage_full_participation_rejected():
    pol = ThresholdPolicy.constant(0.0, 0.0, 3)
    with pytest.raises(DomainError):
        second_stage_net_utility(0.0, 1.0, pol, ModelParams(0.5, 0.5, 3))


def test_no_second_stage_reduces_to_single_stage():
    p = ModelParams(0.7, 0.0, 6)
    pol = ThresholdPolicy.constant(0.4, -np.inf, 6)
    for y in (-0.5, 0.4, 1.3):
        assert first_stage_net_gain(y, pol, p) == pytest.approx(
            single_stage_net_gain(y, 0.4, p), abs=1e-12)


def test_single_stage_large_population_matches_limit():
    p = ModelParams(0.5, 0.5, 10**7)
    tau = solve_single_stage(ModelParams(0.5, 0.5)).tau_star
    assert single_stage_net_gain(tau, tau, p) == pytest.approx(
        delta_single_stage(tau, ModelParams(0.5, 0.5)), abs=1e-6)
    assert solve_single_stage_finite(ModelParams(0.5, 0.5, 10**7)) == pytest.approx(tau, abs=1e-5)


def test_best_response_lambda_shape():
    p = ModelParams(0.5, 0.5, 4)
    lam = best_response_lambda(ThresholdPolicy.constant(0.3, 0.3, 4), p)
    assert lam.shape == (5,) and lam[-1] == math.inf
    assert not np.isnan(lam).any()


def test_best_response_iteration_small_n():
    p = ModelParams(0.5, 0.5, 3)
    res = best_response_iteration(ThresholdPolicy.limit(0.5, 0.5, 3), p, max_iters=30)
    pol, converged = res
    assert res.iterations <= 30
    if converged:
        # fixed point: one more round of best responses leaves it in place
        np.testing.assert_allclose(best_response_lambda(pol, p), pol.lam, atol=1e-6)


def test_simulation_deterministic_and_consistent():
    p = ModelParams(0.5, 0.8, 200)
    pol = ThresholdPolicy.limit(0.55, 0.5, 200)
    a, b = simulate_round(pol, p, 123), simulate_round(pol, p, 123)
    np.testing.assert_array_equal(a.payoffs, b.payoffs)
    assert a.participation == a.stage1_actions.mean()
    assert not (a.stage1_actions & a.stage2_actions).any()
    share = (a.stage1_actions.sum() + a.stage2_actions.sum()) / 200
    expected = (a.stage1_actions + 0.8 * a.stage2_actions) * (share - a.theta)
    np.testing.assert_allclose(a.payoffs, expected)


def test_theta_shared_across_population_sizes():
    pols = [ThresholdPolicy.constant(0.0, -np.inf, n) for n in (10, 1000)]
    th = [simulate_round(pol, ModelParams(1.0, 0.5, pol.population), 5).theta for pol in pols]
    assert th[0] == th[1]


def test_saturated_policy():
    p = ModelParams(0.5, 0.5, 50)
    tr = simulate_round(ThresholdPolicy.limit(math.inf, 0.5, 50), p, 1)
    assert tr.participation == 1.0


def test_population_mismatch():
    with pytest.raises(DomainError):
        simulate_round(ThresholdPolicy.constant(0, 0, 5), ModelParams(0.5, 0.5, 6), 0)
    with pytest.raises(DomainError):
        simulate_round(ThresholdPolicy.constant(0, 0, 5), ModelParams(0.5, 0.5), 0)


def test_replication_seeds_and_records():
    s = replication_seeds(42, 3)
    assert s == replication_seeds(42, 3) and len(set(s)) == 3
    p = ModelParams(0.5, 0.5, 4)
    trs = [simulate_round(ThresholdPolicy.constant(0, 0, 4), p, x) for x in s]
    assert len(list(trace_records(trs))) == 12
    rows = list(summary_records(trs))
    assert [r["replication"] for r in rows] == [0, 1, 2]
