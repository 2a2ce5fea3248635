import math

import numpy as np
import pytest
from scipy import integrate, stats

from delaygame import ModelParams


def _posterior(tau, sigma):
    a = 1.0 / (1.0 + sigma**2)
    return a * tau, math.sqrt(a) * sigma


def _quad(f, lo, hi):
    return integrate.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)[0]


def brute_delta_two(tau, sigma, gamma):
    """Adaptive QUADPACK Bayes integral split at the dominance boundary."""
    m, sd = _posterior(tau, sigma)
    lo, hi = m - 14 * sd, m + 14 * sd
    dens = lambda t: stats.norm.pdf(t, m, sd)  # noqa: E731
    below = _quad(lambda t: (1 - gamma) * (1 - t) * dens(t), lo, min(1.0, hi)) if lo < 1 else 0.0
    above = _quad(lambda t: (stats.norm.cdf((tau - t) / sigma) - t) * dens(t),
                  max(1.0, lo), hi) if hi > 1 else 0.0
    return below + above


def brute_delta_single(tau, sigma):
    m, sd = _posterior(tau, sigma)
    return _quad(lambda t: (stats.norm.cdf((tau - t) / sigma) - t) * stats.norm.pdf(t, m, sd),
                 m - 14 * sd, m + 14 * sd)


@pytest.fixture
def params():
    return ModelParams(0.5, 0.8)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
