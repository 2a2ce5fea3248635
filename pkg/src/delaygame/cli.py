"""Command-line entry point: ``delaygame {solve,welfare,sweep,simulate,verify}``.

Exit codes: 0 success, 1 usage, 2 numeric/solver failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io as out
from .equilibrium import (ModelParams, dtau_dgamma, solve_single_stage, solve_two_stage)
from .errors import DelayGameError, DomainError
from .finite_game import (ThresholdPolicy, replication_seeds, simulate_round,
                          summary_records, trace_records)
from .verify import DEFAULT_SEED, run_battery
from .welfare import (region_sweep, w_single_stage, w_two_stage, w_two_stage_dtau,
                      welfare_argmax)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3
COMMANDS = ("solve", "welfare", "sweep", "simulate", "verify")


@dataclass
class RunConfig:
    command: str = "solve"
    sigma: float = 0.5
    gamma: float = 0.8
    tau: float | None = None
    tau_min: float = -3.0
    tau_max: float = 3.0
    tau_steps: int = 601
    sigma_min: float = 0.05
    sigma_max: float = 2.5
    sigma_steps: int = 50
    gamma_min: float = 0.02
    gamma_max: float = 0.98
    gamma_steps: int = 49
    population: int | None = None  # None = infinite
    seed: int = DEFAULT_SEED
    replications: int = 100
    output: str | None = None
    traces: str | None = None
    format: str = "csv"
    quick: bool = False
    workers: int | None = None
    inject_bug: bool = field(default=False, repr=False)

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.format not in ("csv", "json"):
            raise UsageError("--format must be csv or json")
        for axis in ("tau", "sigma", "gamma"):
            lo, hi, n = (getattr(self, f"{axis}_{x}") for x in ("min", "max", "steps"))
            if n < 1:
                raise UsageError(f"--{axis}-steps must be >= 1")
            if n > 1 and not lo < hi:
                raise UsageError(f"--{axis}-min must be below --{axis}-max")
        if self.replications < 1:
            raise UsageError("--replications must be >= 1")
        if self.population is not None and self.population < 2:
            raise UsageError("--population must be >= 2 or 'inf'")

    def grid(self, axis: str) -> np.ndarray:
        lo, hi, n = (getattr(self, f"{axis}_{x}") for x in ("min", "max", "steps"))
        return np.array([lo]) if n == 1 else np.linspace(lo, hi, n)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("inject_bug")
        d["population"] = "inf" if self.population is None else self.population
        return d


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _population(text: str):
    if text.lower() in ("inf", "infinity"):
        return None
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"population must be an integer or 'inf', got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    d = RunConfig()
    parser = _Parser(prog="delaygame",
                     description="Two-stage global game: thresholds, welfare, value of delay, "
                                 "finite-N simulation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "solve": "equilibrium thresholds of both game forms and d tau*/d gamma",
        "welfare": "welfare of both game forms over a tau grid",
        "sweep": "value of delay over a (sigma, gamma) grid",
        "simulate": "Monte Carlo replications of the finite-N game",
        "verify": "run the property battery; nonzero exit on any failure",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name], description=helps[name],
                           argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file of defaults; flags given here override it")
        p.add_argument("--sigma", type=float, help=f"signal noise std (default: {d.sigma})")
        p.add_argument("--gamma", type=float, help=f"discount factor (default: {d.gamma})")
        p.add_argument("--tau", type=float,
                       help="simulate: first-stage threshold, may be inf (default: equilibrium)")
        for axis in ("tau", "sigma", "gamma"):
            for part in ("min", "max", "steps"):
                default = getattr(d, f"{axis}_{part}")
                p.add_argument(f"--{axis}-{part}", type=int if part == "steps" else float,
                               help=f"{axis} grid {part} (default: {default})")
        p.add_argument("--population", type=_population,
                       help="number of agents or 'inf' (default: inf)")
        p.add_argument("--replications", type=int, help=f"default: {d.replications}")
        p.add_argument("--seed", type=int, help=f"master RNG seed (default: {d.seed})")
        p.add_argument("--output", help="output file (default: stdout)")
        p.add_argument("--traces", help="simulate: per-agent trace file (default: none)")
        p.add_argument("--format", choices=("csv", "json"), help="default: csv")
        p.add_argument("--quick", action="store_true", help="verify: small-N variants only")
        p.add_argument("--workers", type=int,
                       help="sweep: worker processes (default: 1)")
        p.add_argument("--inject-bug", action="store_true", help=argparse.SUPPRESS)
    return parser


def config_from_args(argv: Sequence[str] | None = None) -> RunConfig:
    parser = build_parser()
    args = parser.parse_args(argv)
    given = vars(args)
    config_path = given.get("config")
    cfg = RunConfig(command=args.command)
    if config_path:
        try:
            data = json.loads(Path(config_path).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}")
        known = {f.name for f in fields(RunConfig)}
        for k, v in data.items():
            k = k.replace("-", "_")
            if k not in known or k == "command":
                raise UsageError(f"unknown config key {k!r}")
            if k == "population":
                v = None if v in (None, "inf") else int(v)
            setattr(cfg, k, v)
    for k, v in given.items():
        if k not in ("command", "config"):
            setattr(cfg, k, v)
    cfg.validate()
    return cfg


def _emit(cfg: RunConfig, text: str, path: str | None = None) -> None:
    path = path or cfg.output
    if path is None:
        sys.stdout.write(text)
        return
    Path(path).write_text(text, encoding="utf-8")


def cmd_solve(cfg: RunConfig) -> int:
    params = ModelParams(cfg.sigma, cfg.gamma)
    two = solve_two_stage(params)
    single = solve_single_stage(params)
    slope = dtau_dgamma(params, two) if params.unique_guaranteed else math.nan
    if not params.unique_guaranteed:
        print(f"warning: sigma^2 = {cfg.sigma ** 2:.4g} >= 2 pi; uniqueness not guaranteed "
              f"(unique=false)", file=sys.stderr)
    rows = []
    for game, sol in (("two_stage", two), ("single_stage", single)):
        rows.append({"game": game, "tau_star": sol.tau_star, "residual": sol.residual,
                     "bracket_low": sol.bracket[0], "bracket_high": sol.bracket[1],
                     "iterations": sol.iterations, "unique": sol.unique,
                     "dtau_dgamma": slope if game == "two_stage" else math.nan})
    print(f"tau*        = {two.tau_star:.12g}  (residual {two.residual:.2e}, unique={two.unique})",
          file=sys.stderr)
    print(f"tau*_single = {single.tau_star:.12g}  (residual {single.residual:.2e}, "
          f"unique={single.unique})", file=sys.stderr)
    print(f"dtau*/dgamma = {slope:.12g}", file=sys.stderr)
    _emit(cfg, out.render(cfg.format, cfg.as_dict(), rows, out.SOLVE_COLUMNS, {}))
    return EXIT_OK


def cmd_welfare(cfg: RunConfig) -> int:
    params = ModelParams(cfg.sigma, cfg.gamma)
    tau_star = solve_two_stage(params).tau_star
    tau_opt, w_opt = welfare_argmax(params, tau_eq=tau_star)
    grid = cfg.grid("tau")
    i_star = int(np.argmin(np.abs(grid - tau_star)))
    i_opt = int(np.argmin(np.abs(grid - tau_opt)))
    rows = []
    for i, t in enumerate(grid):
        marks = [m for m, j in (("tau_star", i_star), ("tau_opt", i_opt)) if j == i]
        rows.append({"tau": out.rnd(t), "w_two_stage": out.rnd(w_two_stage(t, params)),
                     "w_single_stage": out.rnd(w_single_stage(t, cfg.sigma)),
                     "w_two_stage_dtau": out.rnd(w_two_stage_dtau(t, params)),
                     "marker": ";".join(marks)})
    diag = {"tau_star": tau_star, "w_at_tau_star": w_two_stage(tau_star, params),
            "tau_welfare_opt": tau_opt, "w_at_opt": w_opt}
    print(f"tau* = {tau_star:.12g}, W(tau*) = {diag['w_at_tau_star']:.12g}; "
          f"argmax tau = {tau_opt:.12g}, max W = {w_opt:.12g}", file=sys.stderr)
    _emit(cfg, out.render(cfg.format, cfg.as_dict(), rows, out.WELFARE_COLUMNS, diag))
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    cells = region_sweep(cfg.grid("sigma"), cfg.grid("gamma"), workers=cfg.workers or 1)
    rows = [out.sweep_row(c) for c in cells]
    failed = sum(1 for c in cells if c.error)
    ok_share = 1.0 - failed / len(cells)
    diag = {"cells": len(cells), "failed": failed,
            "beneficial": sum(r["beneficial"] for r in rows)}
    _emit(cfg, out.render(cfg.format, cfg.as_dict(), rows, out.SWEEP_COLUMNS, diag))
    print(f"{len(cells)} cells, {diag['beneficial']} beneficial, {failed} failed", file=sys.stderr)
    return EXIT_OK if ok_share >= 0.9 else EXIT_NUMERIC


def cmd_simulate(cfg: RunConfig) -> int:
    if cfg.population is None:
        raise UsageError("simulate needs a finite --population")
    n = cfg.population
    if cfg.tau is None:
        tau = solve_two_stage(ModelParams(cfg.sigma, cfg.gamma)).tau_star
    else:
        tau = cfg.tau
    params = ModelParams(cfg.sigma, cfg.gamma, n)
    policy = ThresholdPolicy.limit(tau, cfg.sigma, n)
    traces = [simulate_round(policy, params, s)
              for s in replication_seeds(cfg.seed, cfg.replications)]
    rows = list(summary_records(traces))
    w = np.array([r["mean_payoff"] for r in rows])
    se = float(w.std(ddof=1) / math.sqrt(len(w))) if len(w) > 1 else math.nan
    diag = {"tau": tau, "mean_welfare": float(w.mean()), "standard_error": se}
    print(f"mean welfare per agent {w.mean():.6f} +/- {se:.6f} (tau = {tau:.6g})", file=sys.stderr)
    _emit(cfg, out.render(cfg.format, cfg.as_dict(), rows, out.SUMMARY_COLUMNS, diag))
    if cfg.traces:
        _emit(cfg, out.render(cfg.format, cfg.as_dict(), list(trace_records(traces)),
                              out.TRACE_COLUMNS, {}), cfg.traces)
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    results = run_battery(quick=cfg.quick, seed=cfg.seed, inject_bug=cfg.inject_bug)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name:40s} margin={r.margin:+.3e}  {r.detail} ({r.seconds:.1f}s)",
              file=sys.stderr)
    rows = [r.as_row() for r in results]
    _emit(cfg, out.render(cfg.format, cfg.as_dict(), rows, out.VERIFY_COLUMNS, {}))
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


HANDLERS = {"solve": cmd_solve, "welfare": cmd_welfare, "sweep": cmd_sweep,
            "simulate": cmd_simulate, "verify": cmd_verify}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg = config_from_args(argv)
    except UsageError as exc:
        print(f"delaygame: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return HANDLERS[cfg.command](cfg)
    except UsageError as exc:
        print(f"delaygame: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"delaygame: domain error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DelayGameError as exc:
        print(f"delaygame: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"delaygame: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
