"""Bracketed scalar root finding: bisection with secant acceleration."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import SolverError


@dataclass(frozen=True)
class RootResult:
    root: float
    value: float
    bracket: tuple[float, float]
    iterations: int


def bisect_secant(f: Callable[[float], float], a: float, b: float,
                  fa: float | None = None, fb: float | None = None, *,
                  ftol: float = 1e-12, xtol: float = 4e-16,
                  max_iter: int = 200) -> RootResult:
    """Find a sign change of ``f`` inside ``[a, b]``.

    The bracket is kept at every step, so convergence is guaranteed for any
    continuous ``f``. Each step tries the secant (false-position) point of
    the current bracket and falls back to the midpoint whenever the bracket
    failed to halve on the previous step, which keeps the worst case at
    bisection speed. Returns once ``|f| <= ftol`` or the bracket is below
    ``xtol`` relative width; the returned bracket always straddles the root.
    """
    fa = f(a) if fa is None else fa
    fb = f(b) if fb is None else fb
    if fa == 0.0:
        return RootResult(a, 0.0, (a, b), 0)
    if fb == 0.0:
        return RootResult(b, 0.0, (a, b), 0)
    if (fa > 0) == (fb > 0):
        raise SolverError(f"no sign change on [{a!r}, {b!r}] (f = {fa!r}, {fb!r})")

    best_x, best_f = (a, fa) if abs(fa) < abs(fb) else (b, fb)
    width = abs(b - a)
    use_secant = True
    for it in range(1, max_iter + 1):
        mid = 0.5 * (a + b)
        x = mid
        if use_secant:
            s = b - fb * (b - a) / (fb - fa)
            lo, hi = min(a, b), max(a, b)
            if lo < s < hi and math.isfinite(s):
                x = s
        fx = f(x)
        if abs(fx) < abs(best_f):
            best_x, best_f = x, fx
        if fx == 0.0 or abs(fx) <= ftol:
            return RootResult(x, fx, (a, b), it)
        if (fx > 0) == (fa > 0):
            a, fa = x, fx
        else:
            b, fb = x, fx
        new_width = abs(b - a)
        use_secant = new_width <= 0.5 * width
        width = new_width
        if width <= xtol * max(1.0, abs(a), abs(b)):
            # the collapsed bracket locates the root even where f jumps across zero
            x, fx = (a, fa) if abs(fa) <= abs(fb) else (b, fb)
            return RootResult(x, fx, (a, b), it)
    return RootResult(best_x, best_f, (a, b), max_iter)


def count_sign_changes(values) -> int:
    """Number of strict sign flips in a sequence, skipping exact zeros."""
    signs = [v > 0 for v in values if v != 0 and not math.isnan(v)]
    return sum(1 for p, q in zip(signs, signs[1:]) if p != q)
