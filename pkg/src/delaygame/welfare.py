"""Welfare of the two-stage and single-stage games and the value of delay.

Welfare integrates the per-agent payoff against the standard-normal *prior*
of the fundamental, not against a posterior.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .equilibrium import (ModelParams, _phi_breaks, delta_two_stage,
                          solve_single_stage, solve_two_stage)
from .errors import DomainError, NumericalError
from .gaussian import (DEFAULT_QUADRATURE, QuadratureSpec, gaussian_expectation,
                       posterior_of_signal, posterior_expectation)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class WelfareReport:
    tau: float
    w_two_stage: float
    w_single_stage: float
    tau_welfare_opt: float
    w_at_opt: float


@dataclass(frozen=True)
class RegionCell:
    sigma: float
    gamma: float
    tau_star_two: float
    tau_star_single: float
    value: float
    beneficial: bool
    w_two: float = math.nan
    w_single: float = math.nan
    unique: bool = True
    error: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def _first_stage(theta, tau, sigma):
    return special.ndtr((tau - theta) / sigma)


def w_two_stage(tau: float, params: ModelParams,
                spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Expected per-agent payoff of the two-stage game when early movers use ``tau``."""
    sigma, gamma = params.sigma, params.gamma

    def g(theta):
        f1 = _first_stage(theta, tau, sigma)
        above = f1 * (f1 - theta)
        below = (f1 + gamma * (1.0 - f1)) * (1.0 - theta)
        return np.where(theta > 1.0, above, below)

    return gaussian_expectation(0.0, 1.0, g, spec, _phi_breaks(tau, sigma))


def w_single_stage(tau: float, sigma: float,
                   spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Expected per-agent payoff of the one-shot game with threshold ``tau``."""
    if not sigma > 0:
        raise DomainError("sigma must be positive")

    def g(theta):
        f1 = _first_stage(theta, tau, sigma)
        return f1 * (f1 - theta)

    return gaussian_expectation(0.0, 1.0, g, spec, _phi_breaks(tau, sigma))


def signal_density(tau: float, sigma: float) -> float:
    """Marginal density of a private signal, ``N(0, 1 + sigma^2)``."""
    v = 1.0 + sigma * sigma
    return math.exp(-0.5 * tau * tau / v) / math.sqrt(2.0 * math.pi * v)


def w_two_stage_dtau(tau: float, params: ModelParams,
                     spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Analytic derivative of :func:`w_two_stage` in ``tau``.

    Equals the signal density at ``tau`` times the indifference value plus
    the posterior mass-weighted early participation above the boundary; the
    second term is nonnegative, so welfare rises wherever the indifference
    value is positive.
    """
    if not math.isfinite(tau):
        return 0.0
    sigma = params.sigma

    def above(theta):
        return np.where(theta > 1.0, _first_stage(theta, tau, sigma), 0.0)

    post = posterior_of_signal(tau, sigma)
    extra = posterior_expectation(post, above, spec, _phi_breaks(tau, sigma))
    return signal_density(tau, sigma) * (delta_two_stage(tau, params, spec) + extra)


def second_stage_value(params: ModelParams) -> RegionCell:
    """Value of the option to delay: equilibrium welfare difference of the two games."""
    two = solve_two_stage(params)
    single = solve_single_stage(params)
    w2 = w_two_stage(two.tau_star, params)
    w1 = w_single_stage(single.tau_star, params.sigma)
    value = w2 - w1
    return RegionCell(params.sigma, params.gamma, two.tau_star, single.tau_star,
                      value, value > 0, w2, w1, two.unique and single.unique)


def _golden_section(f, a: float, b: float, tol: float) -> tuple[float, float]:
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def _is_unimodal(values: np.ndarray, slack: float = 1e-12) -> bool:
    i = int(np.argmax(values))
    rising = np.diff(values[: i + 1])
    falling = np.diff(values[i:])
    return bool((rising >= -slack).all() and (falling <= slack).all())


def welfare_argmax(params: ModelParams, search_interval: tuple[float, float] = (-5.0, 5.0),
                   tau_eq: float | None = None, *, tol: float = 1e-6,
                   coarse: int = 41, fallback: int = 10_000) -> tuple[float, float]:
    """Maximise :func:`w_two_stage` over ``tau``.

    A coarse scan checks the profile is unimodal and brackets the peak;
    golden-section search then narrows it to ``tol``. A non-unimodal profile
    falls back to a ``fallback``-point grid scan.
    If ``tau_eq`` is given, the optimum is checked to dominate it.
    """
    lo, hi = search_interval
    if not lo < hi:
        raise DomainError("search interval must satisfy lo < hi")
    f = lambda t: w_two_stage(t, params)  # noqa: E731
    grid = np.linspace(lo, hi, coarse)
    vals = np.array([f(t) for t in grid])
    if _is_unimodal(vals):
        i = int(np.argmax(vals))
        a, b = grid[max(i - 1, 0)], grid[min(i + 1, coarse - 1)]
        tau_opt, w_opt = _golden_section(f, a, b, tol)
    else:
        fine = np.linspace(lo, hi, fallback)
        fvals = np.array([f(t) for t in fine])
        i = int(np.argmax(fvals))
        tau_opt, w_opt = float(fine[i]), float(fvals[i])
    if tau_eq is not None:
        w_eq = f(tau_eq)
        if w_opt < w_eq - 1e-9:
            raise NumericalError(
                f"maximiser {tau_opt} ({w_opt}) below welfare at equilibrium {tau_eq} ({w_eq})")
    return float(tau_opt), float(w_opt)


def welfare_report(params: ModelParams, tau: float | None = None) -> WelfareReport:
    """Welfare of both game forms at ``tau`` (default: the two-stage equilibrium)."""
    if tau is None:
        tau = solve_two_stage(params).tau_star
    tau_opt, w_opt = welfare_argmax(params, tau_eq=tau)
    return WelfareReport(tau, w_two_stage(tau, params), w_single_stage(tau, params.sigma),
                         tau_opt, w_opt)


def _cell(args) -> RegionCell:
    sigma, gamma = args
    try:
        return second_stage_value(ModelParams(sigma, gamma))
    except Exception as exc:  # recorded in-cell; the sweep never aborts
        return RegionCell(sigma, gamma, math.nan, math.nan, math.nan, False,
                          unique=sigma * sigma < 2 * math.pi,
                          error=f"{type(exc).__name__}: {exc}")


def region_sweep(sigma_grid: Sequence[float], gamma_grid: Sequence[float],
                 workers: int | None = None) -> list[RegionCell]:
    """Evaluate the value of delay on a sigma-major grid.

    Output order is ``[(s, g) for s in sigma_grid for g in gamma_grid]``
    whatever the number of worker processes.
    """
    if len(sigma_grid) == 0 or len(gamma_grid) == 0:
        raise DomainError("both grids must be nonempty")
    jobs = [(float(s), float(g)) for s in sigma_grid for g in gamma_grid]
    workers = workers if workers is not None else (os.cpu_count() or 1)
    if workers <= 1 or len(jobs) < 2:
        return [_cell(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_cell, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def default_sigma_grid(count: int = 50) -> np.ndarray:
    return np.linspace(0.05, 2.5, count)


def default_gamma_grid(count: int = 49) -> np.ndarray:
    return np.linspace(0.02, 0.98, count)
