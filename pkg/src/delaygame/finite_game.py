"""Finite-population game: simulation, conditional expectations, best responses.

With ``N`` agents the participation fraction ``S = k/N`` reveals the
fundamental only partially. Conditional on ``theta`` the other agents'
first-stage actions are i.i.d. Bernoulli with ``p(theta) = Phi((tau -
theta)/sigma)``, so every conditional expectation given ``(Y_i, S)`` is a
one-dimensional integral against ``binomial likelihood x Gaussian``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np
from scipy import special, stats

from .equilibrium import ModelParams, solve_threshold
from .errors import DomainError, NumericalError, SolverError, UnidentifiedFundamentalError
from .gaussian import (DEFAULT_QUADRATURE, QuadratureSpec, gauss_legendre,
                       gaussian_expectation, posterior_of_signal, std_cdf, std_cdf_inv)
from .roots import bisect_secant

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _require_finite(params: ModelParams) -> int:
    if params.population is None:
        raise DomainError("finite-population operation called with infinite population")
    return params.population


def signal_window(sigma: float) -> tuple[float, float]:
    """Signals outside this window carry negligible prior mass."""
    return -12.0 * sigma - 5.0, 12.0 * sigma + 5.0


@dataclass(eq=False)
class ThresholdPolicy:
    """Homogeneous threshold policy.

    Stage one: act iff ``Y_i <= tau``. Stage two (delayers only): act iff
    ``Y_i <= lam[k]`` where ``k = N * S`` is the observed number of early
    movers. ``lam`` holds one extended-real entry per attainable ``k``.
    """

    tau: float
    lam: np.ndarray

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        if self.lam.ndim != 1 or len(self.lam) < 3:
            raise DomainError("lam must have one entry per k = 0..N with N >= 2")
        if np.isnan(self.lam).any() or math.isnan(self.tau):
            raise DomainError("thresholds must not be NaN")

    @property
    def population(self) -> int:
        return len(self.lam) - 1

    def lambda_at(self, s: float) -> float:
        return float(self.lam[_count(s, self.population)])

    @classmethod
    def constant(cls, tau: float, lam: float, population: int) -> "ThresholdPolicy":
        return cls(tau, np.full(population + 1, lam, dtype=float))

    @classmethod
    def limit(cls, tau: float, sigma: float, population: int) -> "ThresholdPolicy":
        """Continuum-limit second stage: act iff the implied fundamental is <= 1."""
        s = np.arange(population + 1) / population
        act = s >= std_cdf((tau - 1.0) / sigma)
        return cls(tau, np.where(act, np.inf, -np.inf))


def _count(s: float, n: int) -> int:
    k = int(round(s * n))
    if not 0 <= k <= n or abs(s * n - k) > 1e-9 * max(1, n):
        raise DomainError(f"participation {s!r} is not of the form k/{n}")
    return k


@dataclass(eq=False)
class SimulationTrace:
    theta: float
    signals: np.ndarray
    stage1_actions: np.ndarray
    participation: float
    stage2_actions: np.ndarray
    payoffs: np.ndarray
    seed: int | None = None

    @property
    def population(self) -> int:
        return len(self.signals)

    @property
    def total_welfare(self) -> float:
        return float(self.payoffs.sum())

    @property
    def mean_payoff(self) -> float:
        return float(self.payoffs.mean())


def simulate_round(policy: ThresholdPolicy, params: ModelParams, seed) -> SimulationTrace:
    """Play one realisation of the game. The same seed reproduces the trace exactly.

    The fundamental is drawn before the signals, so a given seed yields the
    same ``theta`` for every population size.
    """
    n = _require_finite(params)
    if policy.population != n:
        raise DomainError(f"policy is for N={policy.population}, params have N={n}")
    rng = np.random.default_rng(seed)
    theta = float(rng.standard_normal())
    signals = theta + params.sigma * rng.standard_normal(n)
    a1 = signals <= policy.tau
    k = int(a1.sum())
    a2 = ~a1 & (signals <= policy.lam[k])
    share = (k + int(a2.sum())) / n
    payoffs = (a1 + params.gamma * a2) * (share - theta)
    return SimulationTrace(theta, signals, a1.astype(np.int8), k / n,
                           a2.astype(np.int8), payoffs, seed)


def replication_seeds(seed: int, replications: int) -> list[int]:
    """Independent per-replication seeds, fixed by the master seed alone."""
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in ss.spawn(replications)]


def trace_records(traces) -> Iterator[dict]:
    """Per-agent export rows: replication, agent_id, theta, signal, a1, a2, payoff."""
    for rep, tr in enumerate(traces):
        for i in range(tr.population):
            yield {"replication": rep, "agent_id": i, "theta": tr.theta,
                   "signal": float(tr.signals[i]), "a1": int(tr.stage1_actions[i]),
                   "a2": int(tr.stage2_actions[i]), "payoff": float(tr.payoffs[i])}


def summary_records(traces) -> Iterator[dict]:
    for rep, tr in enumerate(traces):
        yield {"replication": rep, "theta": tr.theta, "S": tr.participation,
               "total_welfare": tr.total_welfare, "mean_payoff": tr.mean_payoff}


def recovered_fundamental(s, tau: float, sigma: float):
    """Invert ``s = Phi((tau - theta)/sigma)`` for the fundamental."""
    arr = np.asarray(s, dtype=float)
    if (arr <= 0.0).any() or (arr >= 1.0).any():
        bound = math.inf if (arr <= 0.0).any() else -math.inf
        raise UnidentifiedFundamentalError(
            "participation of 0 or 1 does not identify the fundamental", bound)
    out = tau - sigma * np.asarray(std_cdf_inv(arr))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Posterior of theta given (own signal, number of early movers among others)


def _mills(x):
    # phi(x) / Phi(x), stable in both tails
    return np.exp(-0.5 * x * x - LOG_SQRT_2PI - special.log_ndtr(x))


@dataclass
class _Batch:
    y: np.ndarray
    c: np.ndarray  # early movers among the conditioning agents
    m: np.ndarray  # number of conditioning agents
    tau: float
    sigma: float

    def __post_init__(self):
        self.alpha = 1.0 / (1.0 + self.sigma ** 2)
        self.mu = self.alpha * self.y
        self.var = self.alpha * self.sigma ** 2

    def logpdf(self, theta):
        a = (self.tau - theta) / self.sigma
        extra = theta.ndim - self.c.ndim
        c, m, mu = (v.reshape(v.shape + (1,) * extra) for v in (self.c, self.m, self.mu))
        up = np.where(c > 0, c * special.log_ndtr(a), 0.0)
        down = np.where(m - c > 0, (m - c) * special.log_ndtr(-a), 0.0)
        return up + down - 0.5 * (theta - mu) ** 2 / self.var

    def dlogpdf(self, theta):
        a = (self.tau - theta) / self.sigma
        return ((self.m - self.c) * _mills(-a) - self.c * _mills(a)) / self.sigma \
            - (theta - self.mu) / self.var

    def d2logpdf(self, theta):
        a = (self.tau - theta) / self.sigma
        ra, rb = _mills(a), _mills(-a)
        return (-self.c * ra * (a + ra) - (self.m - self.c) * rb * (-a + rb)) / self.sigma ** 2 \
            - 1.0 / self.var


def _posterior_grid(y, c, m, tau: float, sigma: float, nodes: int = 128):
    """Nodes ``(B, 2*nodes)`` and normalised weights for a batch of finite posteriors.

    The log posterior is concave in theta, so its mode is found by bisection
    on the derivative; the grid spans the mode out to where the log density
    has dropped by at least 45 on each side.
    """
    y, c, m = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, dtype=float)) for v in (y, c, m)))
    batch = _Batch(y, c, m, tau, sigma)
    spread = 40.0 * (sigma + math.sqrt(batch.var)) + 10.0
    lo = np.minimum(batch.mu, tau) - spread
    hi = np.maximum(batch.mu, tau) + spread
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        up = batch.dlogpdf(mid) > 0
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    mode = 0.5 * (lo + hi)
    curv = batch.d2logpdf(mode)
    scale = 1.0 / np.sqrt(np.maximum(-curv, 1e-300))
    peak = batch.logpdf(mode)
    if not np.isfinite(peak).all():
        raise NumericalError("posterior log-weights underflow on the whole grid")

    widths = []
    for sign in (-1.0, 1.0):
        w = 12.0 * scale
        for _ in range(30):
            short = batch.logpdf(mode + sign * w) > peak - 45.0
            if not short.any():
                break
            w = np.where(short, 2.0 * w, w)
        widths.append(w)

    x, gw = gauss_legendre(nodes)
    left = mode[:, None] - widths[0][:, None] * 0.5 * (1.0 - x)
    right = mode[:, None] + widths[1][:, None] * 0.5 * (1.0 + x)
    theta = np.concatenate([left, right], axis=1)
    logw = np.concatenate([np.log(0.5 * widths[0])[:, None] + np.log(gw),
                           np.log(0.5 * widths[1])[:, None] + np.log(gw)], axis=1)
    logw = logw + batch.logpdf(theta)
    top = logw.max(axis=1, keepdims=True)
    if not np.isfinite(top).all():
        raise NumericalError("posterior log-weights underflow on the whole grid")
    weights = np.exp(logw - top)
    weights /= weights.sum(axis=1, keepdims=True)
    return theta, weights


def finite_posterior_expectation(g: Callable[[np.ndarray], np.ndarray], y_i: float, s: float,
                                 tau: float, params: ModelParams, *,
                                 own_action: int | None = None) -> float:
    """``E[g(Theta) | Y_i = y_i, S = s]`` in a population of ``N`` agents.

    Agent ``i``'s own first-stage action is implied by ``y_i <= tau`` unless
    ``own_action`` overrides it (used when evaluating a deviation). The
    remaining ``N*s - own_action`` early movers are binomial among the
    other ``N - 1`` agents.
    """
    n = _require_finite(params)
    k = _count(s, n)
    a_i = int(y_i <= tau) if own_action is None else int(own_action)
    c = k - a_i
    if not 0 <= c <= n - 1:
        raise DomainError(f"S={s} is impossible when agent i's own action is {a_i}")
    theta, w = _posterior_grid(y_i, c, n - 1, tau, params.sigma)
    return float(np.sum(w * g(theta)))


# ---------------------------------------------------------------------------
# Best-response conditions


def _stage_two_prob(theta, lam, tau, sigma):
    """``P(tau < Y_j <= max(tau, lam) | theta)`` without cancellation."""
    hi = np.maximum(lam, tau)
    direct = special.ndtr((hi - theta) / sigma) - special.ndtr((tau - theta) / sigma)
    tail = special.ndtr((theta - tau) / sigma) - special.ndtr((theta - hi) / sigma)
    return np.where(theta > tau, direct, tail)


def _second_stage_utility(y, k, lam_k, tau: float, sigma: float, n: int) -> np.ndarray:
    """Vectorised net utility of acting in stage two for a delayer with signal ``y``."""
    y, k, lam_k = np.broadcast_arrays(np.asarray(y, float), np.asarray(k, float),
                                      np.asarray(lam_k, float))
    y, k, lam_k = (np.atleast_1d(v) for v in (y, k, lam_k))
    theta, w = _posterior_grid(y, k, n - 1, tau, sigma)
    mean_theta = np.sum(w * theta, axis=1)

    others = n - k - 1
    prob = np.zeros_like(y)
    prob = np.where(np.isposinf(lam_k), 1.0, prob)
    inner = (others > 0) & np.isfinite(lam_k) & (lam_k > tau)
    if inner.any():
        # agent j is known to have delayed; condition on everyone but i and j
        th2, w2 = _posterior_grid(y[inner], k[inner], n - 2, tau, sigma)
        lam_in = lam_k[inner][:, None]
        num = np.sum(w2 * _stage_two_prob(th2, lam_in, tau, sigma), axis=1)
        den = np.sum(w2 * special.ndtr((th2 - tau) / sigma), axis=1)
        prob[inner] = num / den
    return others / n * prob + 1.0 / n + k / n - mean_theta


def second_stage_net_utility(y_i: float, s: float, policy: ThresholdPolicy,
                             params: ModelParams) -> float:
    """Expected payoff (up to the factor gamma) of acting in stage two after delaying.

    Nonnegative means acting is a best response. Other delayers act per
    ``policy.lam`` at the observed ``s``.
    """
    n = _require_finite(params)
    k = _count(s, n)
    if k == n:
        raise DomainError("S = 1 leaves no delayer")
    return float(_second_stage_utility(y_i, k, policy.lam[k], policy.tau,
                                       params.sigma, n)[0])


def _runs(values: np.ndarray) -> list[tuple[int, int, float]]:
    out = []
    start = 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] != values[start]:
            out.append((start, i - 1, float(values[start])))
            start = i
    return out


def _binom_cdf(k, n: int, p):
    # scipy handles n = 0; clamp k below 0 to an empty sum
    k = np.asarray(k)
    return np.where(k < 0, 0.0, stats.binom.cdf(np.maximum(k, 0), n, p))


def _stage_payoff_sum(theta, p, runs, n_others: int, n: int, tau: float, sigma: float,
                      include):
    """``sum_K P(K) * include(lam_K) * [(K + (n_others-K) q_K + 1)/N - theta]``.

    ``K`` counts early movers among the other agents (binomial in
    ``n_others`` with success ``p``); runs of ``K`` sharing a lambda value
    are summed in closed form via binomial CDF identities.
    """
    total = np.zeros_like(theta)
    no = n_others
    for a, b, lam in runs:
        if not include(lam):
            continue
        mass = _binom_cdf(b, no, p) - _binom_cdf(a - 1, no, p)
        # sum K b_K(no) = no p sum_{K'=a-1}^{b-1} b_K'(no-1)
        k_sum = no * p * (_binom_cdf(b - 1, no - 1, p) - _binom_cdf(a - 2, no - 1, p))
        if lam > tau:
            reach = 1.0 if math.isinf(lam) else special.ndtr((lam - theta) / sigma)
            # sum (no-K) q_K b_K(no) = no (Phi(hi) - p) sum_{K=a}^{b} b_K(no-1)
            late = no * (reach - p) * (_binom_cdf(min(b, no - 1), no - 1, p)
                                       - _binom_cdf(a - 1, no - 1, p))
        else:
            late = 0.0
        total = total + (k_sum + late + mass) / n - theta * mass
    return total


def _net_gain_breaks(lam: np.ndarray, tau: float, sigma: float, n_others: int):
    # theta locations where the binomial count crosses a lambda change
    changes = np.nonzero(lam[1:] != lam[:-1])[0]
    if len(changes) == 0 or not math.isfinite(tau):
        return ()
    p = np.clip((changes + 0.5) / max(n_others, 1), 1e-12, 1 - 1e-12)
    thetas = tau - sigma * np.asarray(std_cdf_inv(p))
    if len(thetas) <= 8:
        return tuple(thetas)
    z = np.asarray(std_cdf_inv(p))
    width = sigma * np.sqrt(p * (1 - p) / max(n_others, 1)) / np.exp(-0.5 * z * z) * math.sqrt(2 * math.pi)
    i_lo, i_hi = int(np.argmin(thetas)), int(np.argmax(thetas))
    return (thetas[i_lo] - 8 * width[i_lo], thetas[i_lo],
            thetas[i_hi], thetas[i_hi] + 8 * width[i_hi])


def first_stage_net_gain(y_i: float, policy: ThresholdPolicy, params: ModelParams,
                         spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Expected gain of acting in stage one over delaying, for signal ``y_i``.

    Everyone else follows ``policy``. Acting now makes ``S = (K+1)/N``;
    delaying makes ``S = K/N`` and the agent then acts iff
    ``y_i <= lam(S)``, earning the discounted payoff.
    """
    n = _require_finite(params)
    if policy.population != n:
        raise DomainError("policy population does not match params")
    sigma, gamma, tau = params.sigma, params.gamma, policy.tau
    no = n - 1
    runs_act = _runs(policy.lam[1:])      # K others early -> S = (K+1)/N
    runs_wait = _runs(policy.lam[:n])     # K others early -> S = K/N

    def integrand(theta):
        p = special.ndtr((tau - theta) / sigma)
        now = _stage_payoff_sum(theta, p, runs_act, no, n, tau, sigma, lambda lam: True)
        if gamma == 0.0:
            return now
        later = _stage_payoff_sum(theta, p, runs_wait, no, n, tau, sigma,
                                  lambda lam: y_i <= lam)
        return now - gamma * later

    post = posterior_of_signal(y_i, sigma)
    breaks = _net_gain_breaks(policy.lam, tau, sigma, no)
    if math.isfinite(tau):
        breaks = (*breaks, tau)
    return gaussian_expectation(post.mean, post.std, integrand, spec, breaks)


def single_stage_net_gain(y_i: float, tau: float, params: ModelParams,
                          spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """One-shot game: ``E[((N-1) p(Theta) + 1)/N - Theta | Y_i = y_i]``."""
    n = _require_finite(params)
    sigma = params.sigma

    def g(theta):
        return ((n - 1) * special.ndtr((tau - theta) / sigma) + 1.0) / n - theta

    post = posterior_of_signal(y_i, sigma)
    return gaussian_expectation(post.mean, post.std, g, spec,
                                () if not math.isfinite(tau) else (tau,))


def solve_single_stage_finite(params: ModelParams) -> float:
    """Equilibrium threshold of the one-shot game with ``N`` agents."""
    _require_finite(params)
    sol = solve_threshold(lambda t, p: single_stage_net_gain(t, t, p), params)
    return sol.tau_star


# ---------------------------------------------------------------------------
# Best-response dynamics


def best_response_lambda(policy: ThresholdPolicy, params: ModelParams,
                         tol: float = 1e-10) -> np.ndarray:
    """Best second-stage thresholds against ``policy`` for every ``k = 0..N``.

    For each ``k`` the delayer's net utility is scanned over the signal
    window; ``+inf`` when it is nonnegative everywhere, ``-inf`` when it is
    negative everywhere, otherwise the crossing located by bisection
    (ties resolve to acting).
    """
    n = _require_finite(params)
    sigma, tau = params.sigma, policy.tau
    lo_y, hi_y = signal_window(sigma)
    ks = np.arange(n, dtype=float)
    lam_now = policy.lam[:n]
    u_lo = _second_stage_utility(np.full(n, lo_y), ks, lam_now, tau, sigma, n)
    u_hi = _second_stage_utility(np.full(n, hi_y), ks, lam_now, tau, sigma, n)
    out = np.empty(n + 1)
    out[n] = np.inf
    out[:n] = np.where(u_hi >= 0, np.inf, -np.inf)
    mixed = (u_lo >= 0) & (u_hi < 0)
    if mixed.any():
        idx = np.nonzero(mixed)[0]
        a = np.full(len(idx), lo_y)
        b = np.full(len(idx), hi_y)
        while (b - a).max() > tol:
            mid = 0.5 * (a + b)
            ok = _second_stage_utility(mid, ks[idx], lam_now[idx], tau, sigma, n) >= 0
            a = np.where(ok, mid, a)
            b = np.where(ok, b, mid)
        out[idx] = a
    return out


def best_response_tau(policy: ThresholdPolicy, params: ModelParams,
                      spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Signal at which acting in stage one stops paying, against ``policy``."""
    lo_y, hi_y = signal_window(params.sigma)
    f = lambda y: first_stage_net_gain(y, policy, params, spec)  # noqa: E731
    start = min(max(policy.tau, lo_y), hi_y) if math.isfinite(policy.tau) else 0.0
    f0 = f(start)
    if f0 == 0.0:
        return start
    step, direction = 0.05, (1.0 if f0 > 0 else -1.0)
    prev, fprev = start, f0
    while True:
        x = min(max(prev + direction * step, lo_y), hi_y)
        fx = f(x)
        if (fx > 0) != (f0 > 0) or fx == 0.0:
            break
        if x in (lo_y, hi_y):
            return math.inf if f0 > 0 else -math.inf
        prev, fprev, step = x, fx, 2.0 * step
    a, b, fa, fb = (prev, x, fprev, fx) if direction > 0 else (x, prev, fx, fprev)
    return bisect_secant(f, a, b, fa, fb, ftol=1e-13, xtol=1e-12).root


def _moved(old: np.ndarray, new: np.ndarray) -> float:
    both = np.isfinite(old) & np.isfinite(new)
    diff = np.full(old.shape, np.inf)
    diff[both] = np.abs(old[both] - new[both])
    diff[old == new] = 0.0
    return float(diff.max())


@dataclass
class BestResponseResult:
    policy: ThresholdPolicy
    converged: bool
    iterations: int
    cycle: tuple[ThresholdPolicy, ThresholdPolicy] | None = field(default=None)

    def __iter__(self):
        return iter((self.policy, self.converged))


def best_response_iteration(initial: ThresholdPolicy, params: ModelParams,
                            max_iters: int = 50, tol: float = 1e-6,
                            spec: QuadratureSpec = DEFAULT_QUADRATURE) -> BestResponseResult:
    """Alternate stage-two and stage-one best responses until nothing moves.

    Unpacks as ``(policy, converged)``. A two-cycle (the state returns to the
    one from two steps earlier without settling) stops the iteration with
    ``converged=False`` and both policies in ``cycle``.
    """
    current = initial
    history: list[ThresholdPolicy] = [initial]
    for it in range(1, max_iters + 1):
        lam = best_response_lambda(current, params)
        tau = best_response_tau(ThresholdPolicy(current.tau, lam), params, spec)
        nxt = ThresholdPolicy(tau, lam)
        if _distance(nxt, current) < tol:
            return BestResponseResult(nxt, True, it)
        if len(history) >= 2 and _distance(nxt, history[-2]) < tol:
            return BestResponseResult(nxt, False, it, (current, nxt))
        history.append(nxt)
        current = nxt
    return BestResponseResult(current, False, max_iters)


def _distance(p: ThresholdPolicy, q: ThresholdPolicy) -> float:
    dt = _moved(np.array([p.tau]), np.array([q.tau]))
    return max(dt, _moved(p.lam, q.lam))


__all__ = [
    "ThresholdPolicy", "SimulationTrace", "BestResponseResult", "simulate_round",
    "recovered_fundamental", "finite_posterior_expectation", "second_stage_net_utility",
    "first_stage_net_gain", "single_stage_net_gain", "solve_single_stage_finite",
    "best_response_lambda", "best_response_tau", "best_response_iteration",
    "replication_seeds", "trace_records", "summary_records", "signal_window",
]
