"""Infinite-population equilibrium: indifference functions and threshold solver.

A first-stage threshold ``tau`` is an equilibrium when an agent whose signal
sits exactly at ``tau`` is indifferent between acting now and waiting for the
public participation fraction. In the infinite population that fraction
reveals the fundamental, so delayers act iff ``theta <= 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .errors import ConsistencyError, DomainError, NumericalError, SolverError
from .gaussian import (DEFAULT_QUADRATURE, QuadratureSpec, posterior_of_signal,
                       posterior_expectation, std_cdf)
from .roots import bisect_secant, count_sign_changes

TWO_PI = 2.0 * math.pi
SQRT_2PI = math.sqrt(TWO_PI)

INFINITE = None  # population marker for the continuum limit


@dataclass(frozen=True)
class ModelParams:
    """Primitives of the game.

    ``population`` is a finite agent count ``N >= 2`` or ``None`` for the
    infinite-population limit. ``gamma = 0`` is accepted as the boundary
    case used in the welfare comparison arguments.
    """

    sigma: float
    gamma: float
    population: int | None = INFINITE

    def __post_init__(self):
        if not (isinstance(self.sigma, (int, float)) and math.isfinite(self.sigma)
                and self.sigma > 0):
            raise DomainError(f"sigma must be positive and finite, got {self.sigma!r}")
        if not (0.0 <= self.gamma < 1.0):
            raise DomainError(f"gamma must lie in [0, 1), got {self.gamma!r}")
        if self.population is not None:
            if int(self.population) != self.population or self.population < 2:
                raise DomainError(f"population must be an integer >= 2, got {self.population!r}")
            object.__setattr__(self, "population", int(self.population))

    @property
    def alpha(self) -> float:
        return 1.0 / (1.0 + self.sigma ** 2)

    @property
    def unique_guaranteed(self) -> bool:
        return self.sigma ** 2 < TWO_PI

    @property
    def is_finite(self) -> bool:
        return self.population is not None

    def with_gamma(self, gamma: float) -> "ModelParams":
        return ModelParams(self.sigma, gamma, self.population)


@dataclass(frozen=True)
class EquilibriumSolution:
    tau_star: float
    residual: float
    bracket: tuple[float, float]
    iterations: int
    unique: bool
    sign_changes: int = field(default=1, compare=False)


IndifferenceFn = Callable[[float, ModelParams], float]


def _phi_breaks(tau: float, sigma: float) -> tuple[float, ...]:
    # the participation curve Phi((tau - theta)/sigma) turns over within a few sigma of tau
    if not math.isfinite(tau):
        return ()
    return (tau - 8.0 * sigma, tau, tau + 8.0 * sigma)


def delta_two_stage(tau: float, params: ModelParams,
                    spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Expected gain from acting in stage one rather than waiting, at signal ``tau``.

    Below the dominance boundary the waiting agent also acts, so the gain is
    the discount loss ``(1 - gamma)(1 - theta)``; above it only the early
    movers act and the gain is ``Phi((tau - theta)/sigma) - theta``.
    """
    sigma, gamma = params.sigma, params.gamma

    def g(theta):
        early = special.ndtr((tau - theta) / sigma) - theta
        return np.where(theta <= 1.0, (1.0 - gamma) * (1.0 - theta), early)

    post = posterior_of_signal(tau, sigma)
    return posterior_expectation(post, g, spec, _phi_breaks(tau, sigma))


def delta_single_stage(tau: float, params: ModelParams,
                       spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Single-stage indifference: ``E[Phi((tau - Theta)/sigma) - Theta | Y = tau]``."""
    sigma = params.sigma

    def g(theta):
        return special.ndtr((tau - theta) / sigma) - theta

    post = posterior_of_signal(tau, sigma)
    return posterior_expectation(post, g, spec, _phi_breaks(tau, sigma))


def _expand_bracket(f: Callable[[float], float], limit: float):
    f0 = f(0.0)
    if f0 == 0.0:
        return 0.0, 0.0, f0, f0
    direction = 1.0 if f0 > 0 else -1.0
    prev, fprev = 0.0, f0
    step = 1.0
    while True:
        x = direction * min(step, limit)
        fx = f(x)
        if (fx > 0) != (f0 > 0) or fx == 0.0:
            lo, hi = (prev, x) if direction > 0 else (x, prev)
            flo, fhi = (fprev, fx) if direction > 0 else (fx, fprev)
            return lo, hi, flo, fhi
        if step >= limit:
            raise SolverError(
                f"no sign change of the indifference function on "
                f"[{min(0.0, x)!r}, {max(0.0, x)!r}] (value {fx!r} at the far end)")
        prev, fprev = x, fx
        step *= 2.0


def solve_threshold(delta: IndifferenceFn, params: ModelParams, *,
                    tol: float = 1e-9, limit: float = 50.0,
                    scan_points: int = 200) -> EquilibriumSolution:
    """Root of a decreasing indifference function.

    The bracket is found by doubling outward from ``tau = 0`` (up to
    ``|tau| <= limit``), scanned on ``scan_points`` points for extra sign
    changes, and refined by :func:`bisect_secant` on the first sign change.

    Raises:
        SolverError: no sign change within ``|tau| <= limit``, or the
            refined residual exceeds ``tol``.
        ConsistencyError: more than one sign change although
            ``sigma^2 < 2 pi`` guarantees a single root.
    """
    f = lambda t: delta(t, params)  # noqa: E731
    lo, hi, flo, fhi = _expand_bracket(f, limit)
    if lo == hi:
        return EquilibriumSolution(0.0, 0.0, (0.0, 0.0), 0, params.unique_guaranteed)

    grid = np.linspace(lo, hi, scan_points)
    vals = [flo, *(f(t) for t in grid[1:-1]), fhi]
    changes = count_sign_changes(vals)
    if params.unique_guaranteed and changes != 1:
        raise ConsistencyError(
            f"{changes} sign changes on [{lo}, {hi}] although sigma^2 < 2 pi")
    # first sign change of the scan; exact zeros on the grid are roots already
    for i in range(scan_points - 1):
        if vals[i] == 0.0:
            return EquilibriumSolution(float(grid[i]), 0.0, (float(grid[i]), float(grid[i])),
                                       0, params.unique_guaranteed and changes == 1, changes)
        if (vals[i] > 0) != (vals[i + 1] > 0) and vals[i + 1] != 0.0:
            a, b, fa, fb = float(grid[i]), float(grid[i + 1]), vals[i], vals[i + 1]
            break
    else:
        a, b, fa, fb = float(grid[-1]), float(grid[-1]), vals[-1], vals[-1]
        return EquilibriumSolution(a, abs(fa), (a, b), 0,
                                   params.unique_guaranteed and changes == 1, changes)

    res = bisect_secant(f, a, b, fa, fb, ftol=min(tol, 1e-12) * 1e-2)
    if abs(res.value) > tol:
        raise SolverError(
            f"residual {abs(res.value):.3e} above {tol:.0e} in bracket {res.bracket}")
    unique = params.unique_guaranteed and changes == 1
    ba, bb = res.bracket
    bracket = (min(ba, bb), max(ba, bb))
    return EquilibriumSolution(res.root, abs(res.value), bracket, res.iterations,
                               unique, changes)


def solve_two_stage(params: ModelParams, **kw) -> EquilibriumSolution:
    return solve_threshold(delta_two_stage, params, **kw)


def solve_single_stage(params: ModelParams, **kw) -> EquilibriumSolution:
    return solve_threshold(delta_single_stage, params, **kw)


def delta_slope_bound(params: ModelParams) -> float:
    """Upper bound on the slope of :func:`delta_two_stage` (negative when sigma^2 < 2 pi)."""
    if not params.unique_guaranteed:
        raise DomainError("slope bound needs sigma^2 < 2 pi")
    a = params.alpha
    return max(-a * (1.0 - params.gamma), a * (params.sigma / SQRT_2PI - 1.0))


def second_stage_policy(s: float, tau: float, sigma: float) -> int:
    """Act in stage two iff the observed participation certifies ``theta <= 1``.

    Equality counts as acting.
    """
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"participation must lie in [0, 1], got {s!r}")
    return int(s >= std_cdf((tau - 1.0) / sigma))


def aggregate_action(theta, tau: float, sigma: float):
    """Total participation over both stages once the fundamental is revealed."""
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    theta = np.asarray(theta, dtype=float)
    out = np.where(theta <= 1.0, 1.0, special.ndtr((tau - theta) / sigma))
    return float(out) if out.ndim == 0 else out


def _loss_below_boundary(tau: float, sigma: float) -> float:
    # E[(1 - Theta) 1(Theta <= 1) | Y = tau] for the Gaussian posterior, closed form
    post = posterior_of_signal(tau, sigma)
    sd = post.std
    z = (1.0 - post.mean) / sd
    return (1.0 - post.mean) * special.ndtr(z) + sd * math.exp(-0.5 * z * z) / SQRT_2PI


def dtau_dgamma(params: ModelParams, solution: EquilibriumSolution | None = None,
                step: float = 1e-5) -> float:
    """Sensitivity of the two-stage threshold to the discount factor.

    Implicit differentiation of ``delta_two_stage(tau*, gamma) = 0``. The
    gamma-partial has a closed form; the tau-partial is a central difference
    with a Richardson cross-check against step ``2 * step``.
    """
    if not params.unique_guaranteed:
        raise DomainError("comparative statics need sigma^2 < 2 pi")
    sol = solution or solve_two_stage(params)
    t = sol.tau_star
    d_gamma = -_loss_below_boundary(t, params.sigma)

    def central(h):
        return (delta_two_stage(t + h, params) - delta_two_stage(t - h, params)) / (2 * h)

    d1 = central(step)
    d2 = central(2 * step)
    d_tau = d1 + (d1 - d2) / 3.0
    if abs(d_tau - d1) > 1e-3 * abs(d_tau) + 1e-9:
        raise NumericalError(f"finite-difference slope unstable: {d1!r} vs {d2!r}")
    if abs(d_tau) < 1e-8:
        raise NumericalError(f"ill-conditioned: d delta / d tau = {d_tau!r}")
    return -d_gamma / d_tau
