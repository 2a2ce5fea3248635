"""Property battery behind ``delaygame verify``.

Each check returns a :class:`PropertyResult` with a signed margin: positive
means the property held with that much room, negative means it failed by
that much.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special
from scipy.stats import linregress

from .equilibrium import (ModelParams, delta_slope_bound, delta_two_stage, dtau_dgamma,
                          second_stage_policy, solve_single_stage, solve_two_stage)
from .finite_game import (ThresholdPolicy, finite_posterior_expectation, first_stage_net_gain,
                          recovered_fundamental, replication_seeds,
                          second_stage_net_utility, simulate_round)
from .gaussian import std_cdf_inv
from .welfare import w_single_stage, w_two_stage, w_two_stage_dtau

DEFAULT_SEED = 20240601


@dataclass
class PropertyResult:
    name: str
    passed: bool
    margin: float
    detail: str = ""
    seconds: float = 0.0

    def as_row(self) -> dict:
        return {"property": self.name, "passed": self.passed, "margin": self.margin,
                "detail": self.detail}


def _result(name, margin, detail=""):
    return PropertyResult(name, bool(margin >= 0), float(margin), detail)


def check_monotonicity(n_params: int = 20, seed: int = DEFAULT_SEED,
                       delta=delta_two_stage) -> PropertyResult:
    """Strict decrease of the two-stage indifference function, slope under its bound."""
    rng = np.random.default_rng(seed)
    grid = np.linspace(-5.0, 5.0, 101)
    worst, where = math.inf, ""
    for _ in range(n_params):
        sigma = float(rng.uniform(0.05, math.sqrt(2 * math.pi) - 0.05))
        gamma = float(rng.uniform(0.02, 0.98))
        p = ModelParams(sigma, gamma)
        vals = np.array([delta(t, p) for t in grid])
        slopes = np.diff(vals) / np.diff(grid)
        kappa = delta_slope_bound(p)
        changes = int(np.sum(np.diff(np.sign(vals)) != 0))
        margin = min(float(-slopes.max()), float(kappa + 1e-6 - slopes.max()))
        if changes != 1:
            margin = min(margin, -1.0)
        if margin < worst:
            worst, where = margin, f"sigma={sigma:.4g} gamma={gamma:.4g} sign_changes={changes}"
    return _result("delta_monotone_below_slope_bound", worst, where)


def check_residuals(sigmas=(0.1, 0.5, 1.0, 2.0), gammas=(0.1, 0.5, 0.9)) -> PropertyResult:
    worst = -math.inf
    for s in sigmas:
        for g in gammas:
            p = ModelParams(s, g)
            worst = max(worst, solve_two_stage(p).residual, solve_single_stage(p).residual)
    return _result("root_residual", 1e-9 - worst, f"max residual {worst:.3e}")


def check_derivative_identity(taus=np.arange(-2.0, 2.01, 1.0), h: float = 1e-4) -> PropertyResult:
    worst = 0.0
    for s in (0.3, 0.7):
        for g in (0.2, 0.8):
            p = ModelParams(s, g)
            for t in taus:
                fd = (w_two_stage(t + h, p) - w_two_stage(t - h, p)) / (2 * h)
                worst = max(worst, abs(w_two_stage_dtau(t, p) - fd))
    return _result("welfare_derivative_identity", 1e-5 - worst, f"max abs diff {worst:.3e}")


def check_comparative_statics(sigma: float = 0.5) -> PropertyResult:
    gammas = np.round(np.arange(0.1, 0.91, 0.1), 10)
    taus = [solve_two_stage(ModelParams(sigma, g)).tau_star for g in gammas]
    dec = float(-np.diff(taus).max())
    h = 1e-3
    p = ModelParams(sigma, 0.5)
    fd = (solve_two_stage(p.with_gamma(0.5 + h)).tau_star
          - solve_two_stage(p.with_gamma(0.5 - h)).tau_star) / (2 * h)
    rel = abs(dtau_dgamma(p) - fd) / abs(fd)
    return _result("tau_decreasing_in_gamma", min(dec, 1e-3 - rel),
                   f"min step {dec:.3e}, IFT rel err {rel:.2e}")


def check_ordering_small_gamma(sigmas=(0.1, 0.3, 0.5, 1.0),
                               gammas=(0.02, 0.05, 0.1, 0.2)) -> PropertyResult:
    """Two-stage threshold above the single-stage one where delay is cheap enough."""
    worst = math.inf
    for s in sigmas:
        single = solve_single_stage(ModelParams(s, 0.5)).tau_star
        for g in gammas:
            worst = min(worst, solve_two_stage(ModelParams(s, g)).tau_star - single)
    return PropertyResult("ordering_small_gamma", worst > 0, worst,
                          f"min tau*-tau*_single {worst:.4g}")


def check_policy_consistency(n: int = 2000, seed: int = DEFAULT_SEED) -> PropertyResult:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n):
        s = float(rng.uniform(1e-9, 1 - 1e-9))
        tau = float(rng.uniform(-3, 3))
        sigma = float(rng.uniform(0.05, 2.5))
        alt = int(tau - sigma * std_cdf_inv(s) <= 1.0)
        bad += second_stage_policy(s, tau, sigma) != alt
    return _result("second_stage_policy_consistency", -bad, f"{bad} disagreements of {n}")


def check_chain(sigma: float = 0.05, gamma: float = 0.5) -> PropertyResult:
    p = ModelParams(sigma, gamma)
    t2 = solve_two_stage(p).tau_star
    t1 = solve_single_stage(p).tau_star
    a, b, c = w_two_stage(t2, p), w_two_stage(t1, p), w_single_stage(t1, sigma)
    return _result("welfare_chain_small_sigma", min(a - b, b - c),
                   f"{a:.6f} > {b:.6f} > {c:.6f}")


def check_lln(populations=(10**2, 10**3, 10**4, 10**5), replications: int = 100,
              seed: int = DEFAULT_SEED, tau: float = 0.0, sigma: float = 1.0) -> PropertyResult:
    seeds = replication_seeds(seed, replications)
    e_s, e_t = [], []
    for n in populations:
        p = ModelParams(sigma, 0.5, n)
        pol = ThresholdPolicy.constant(tau, -np.inf, n)
        ds, dt = [], []
        for sd in seeds:
            tr = simulate_round(pol, p, sd)
            ds.append(abs(tr.participation - special.ndtr((tau - tr.theta) / sigma)))
            if 0.0 < tr.participation < 1.0:
                dt.append(abs(recovered_fundamental(tr.participation, tau, sigma) - tr.theta))
        e_s.append(np.mean(ds))
        e_t.append(np.mean(dt))
    logn = np.log(populations)
    k1 = linregress(logn, np.log(e_s)).slope
    k2 = linregress(logn, np.log(e_t)).slope
    dec = min(float(-np.diff(e_s).max()), float(-np.diff(e_t).max()))
    margin = min(0.1 - abs(k1 + 0.5), 0.1 - abs(k2 + 0.5), dec)
    return _result("lln_rate", margin, f"slopes {k1:.3f} (S), {k2:.3f} (theta)")


def check_concentration(populations=(10**2, 10**3, 10**4), replications: int = 100,
                        seed: int = DEFAULT_SEED, tau: float = 0.0, sigma: float = 1.0) -> PropertyResult:
    seeds = replication_seeds(seed + 1, replications)
    means = []
    for n in populations:
        p = ModelParams(sigma, 0.5, n)
        pol = ThresholdPolicy.constant(tau, -np.inf, n)
        gaps = []
        for sd in seeds:
            tr = simulate_round(pol, p, sd)
            if not 0.0 < tr.participation < 1.0:
                continue
            post = finite_posterior_expectation(lambda t: t, float(tr.signals[0]),
                                                tr.participation, tau, p)
            gaps.append(abs(post - recovered_fundamental(tr.participation, tau, sigma)))
        means.append(np.mean(gaps))
    return _result("posterior_concentration", float(-np.diff(means).max()),
                   "mean gaps " + ", ".join(f"{m:.3e}" for m in means))


ORACLE_POINTS = (
    # sigma, gamma, tau, lam[0..3], y, k
    (0.5, 0.5, 0.5, (-np.inf, 0.9, 1.4, np.inf), 1.0, 1),
    (0.8, 0.3, 0.2, (-np.inf, 0.5, 1.1, np.inf), 0.6, 0),
    (0.4, 0.7, 0.8, (0.3, 1.2, 2.0, np.inf), 0.9, 2),
    (1.0, 0.5, 0.0, (-1.0, 0.5, 0.7, np.inf), 0.4, 1),
    (0.3, 0.9, 1.0, (-np.inf, -np.inf, 1.5, np.inf), 1.2, 2),
)


def mc_second_stage(y, k, policy, sigma, n, accepted, rng, batch=1_000_000):
    """Rejection-sampling estimate of the stage-two net utility; returns (mean, se)."""
    alpha = 1.0 / (1.0 + sigma ** 2)
    chunks, got = [], 0
    while got < accepted:
        theta = alpha * y + math.sqrt(alpha) * sigma * rng.standard_normal(batch)
        ys = theta[:, None] + sigma * rng.standard_normal((batch, n - 1))
        early = ys <= policy.tau
        keep = early.sum(axis=1) == k
        theta, ys, early = theta[keep], ys[keep], early[keep]
        late = ~early & (ys <= policy.lam[k])
        chunks.append((late.sum(axis=1) + 1) / n + k / n - theta)
        got += int(keep.sum())
    v = np.concatenate(chunks)[:accepted]
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


def mc_first_stage(y, policy, sigma, gamma, n, draws, rng):
    """Monte Carlo estimate of the stage-one net gain; returns (mean, se)."""
    alpha = 1.0 / (1.0 + sigma ** 2)
    theta = alpha * y + math.sqrt(alpha) * sigma * rng.standard_normal(draws)
    ys = theta[:, None] + sigma * rng.standard_normal((draws, n - 1))
    early = ys <= policy.tau
    k = early.sum(axis=1)
    lam_now = policy.lam[k + 1][:, None]
    share_now = (k + (~early & (ys <= lam_now)).sum(axis=1) + 1) / n
    lam_wait = policy.lam[k]
    act_late = y <= lam_wait
    share_wait = (k + (~early & (ys <= lam_wait[:, None])).sum(axis=1) + act_late) / n
    d = (share_now - theta) - gamma * act_late * (share_wait - theta)
    return float(d.mean()), float(d.std(ddof=1) / math.sqrt(draws))


def check_oracle_equivalence(draws: int = 10**6, seed: int = DEFAULT_SEED) -> PropertyResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for sigma, gamma, tau, lam, y, k in ORACLE_POINTS:
        p = ModelParams(sigma, gamma, 3)
        pol = ThresholdPolicy(tau, np.array(lam))
        m, se = mc_second_stage(y, k, pol, sigma, 3, draws, rng)
        worst = max(worst, abs(second_stage_net_utility(y, k / 3, pol, p) - m) / se)
        m, se = mc_first_stage(y, pol, sigma, gamma, 3, draws, rng)
        worst = max(worst, abs(first_stage_net_gain(y, pol, p) - m) / se)
    return _result("small_n_oracle_equivalence", 3.0 - worst, f"max |z| {worst:.2f}")


def check_welfare_consistency(points=((0.3, 0.5), (0.5, 0.8), (1.0, 0.2)), n: int = 10**4,
                              replications: int = 100, seed: int = DEFAULT_SEED) -> PropertyResult:
    seeds = replication_seeds(seed + 2, replications)
    worst = 0.0
    for sigma, gamma in points:
        tau = solve_two_stage(ModelParams(sigma, gamma)).tau_star
        p = ModelParams(sigma, gamma, n)
        pol = ThresholdPolicy.limit(tau, sigma, n)
        w = np.array([simulate_round(pol, p, sd).mean_payoff for sd in seeds])
        se = w.std(ddof=1) / math.sqrt(len(w))
        worst = max(worst, abs(w.mean() - w_two_stage(tau, ModelParams(sigma, gamma))) / se)
    return _result("simulated_welfare_matches_quadrature", 3.0 - worst, f"max |z| {worst:.2f}")


def battery(quick: bool = False, seed: int = DEFAULT_SEED,
            inject_bug: bool = False) -> list[Callable[[], PropertyResult]]:
    delta = delta_two_stage
    if inject_bug:
        def delta(t, p):  # sign-flipped canary
            return -delta_two_stage(t, p)
    lln_n = (10**1, 10**2, 10**3) if quick else (10**2, 10**3, 10**4, 10**5)
    conc_n = (10**1, 10**2, 10**3) if quick else (10**2, 10**3, 10**4)
    return [
        lambda: check_monotonicity(5 if quick else 20, seed, delta),
        check_residuals,
        check_derivative_identity,
        check_comparative_statics,
        check_ordering_small_gamma,
        lambda: check_policy_consistency(seed=seed),
        check_chain,
        lambda: check_lln(lln_n, seed=seed),
        lambda: check_concentration(conc_n, seed=seed),
        lambda: check_oracle_equivalence(10**5 if quick else 10**6, seed),
        lambda: check_welfare_consistency(n=10**3 if quick else 10**4, seed=seed),
    ]


def run_battery(quick: bool = False, seed: int = DEFAULT_SEED,
                inject_bug: bool = False) -> list[PropertyResult]:
    out = []
    for check in battery(quick, seed, inject_bug):
        t0 = time.perf_counter()
        try:
            res = check()
        except Exception as exc:  # a crashing check is a failing check
            res = PropertyResult(getattr(check, "__name__", "check"), False, -math.inf,
                                 f"{type(exc).__name__}: {exc}")
        res.seconds = time.perf_counter() - t0
        out.append(res)
    return out
