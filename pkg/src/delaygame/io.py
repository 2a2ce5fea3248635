"""CSV / JSON writers with frozen column orders.

Every float goes out at 12 significant digits. Values are rounded *before*
derived columns are computed, so a reader who recomputes a derived column
from the emitted primaries gets back exactly what was written, and CSV and
JSON carry the same numbers.
"""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Iterable, Sequence

SIG_DIGITS = 12

SOLVE_COLUMNS = ("game", "tau_star", "residual", "bracket_low", "bracket_high",
                 "iterations", "unique", "dtau_dgamma")
WELFARE_COLUMNS = ("tau", "w_two_stage", "w_single_stage", "w_two_stage_dtau", "marker")
SWEEP_COLUMNS = ("sigma", "gamma", "tau_two", "tau_single", "V", "beneficial",
                 "unique_flag", "w_two", "w_single", "error")
SUMMARY_COLUMNS = ("replication", "theta", "S", "total_welfare", "mean_payoff")
TRACE_COLUMNS = ("replication", "agent_id", "theta", "signal", "a1", "a2", "payoff")
VERIFY_COLUMNS = ("property", "passed", "margin", "detail")


def rnd(x: float) -> float:
    """Round to the emitted precision (non-finite values pass through)."""
    x = float(x)
    if not math.isfinite(x):
        return x
    return float(f"{x:.{SIG_DIGITS}g}")


def _text(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.{SIG_DIGITS}g}"
    return "" if v is None else str(v)


def _json_value(v):
    if isinstance(v, float):
        if not math.isfinite(v):
            return _text(v)
        return rnd(v)
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    return v


def parse_float(text: str) -> float:
    return float(text)  # float() already understands inf / -inf / nan


def sweep_row(cell) -> dict:
    w2, w1 = rnd(cell.w_two), rnd(cell.w_single)
    value = rnd(w2 - w1)
    return {"sigma": rnd(cell.sigma), "gamma": rnd(cell.gamma),
            "tau_two": rnd(cell.tau_star_two), "tau_single": rnd(cell.tau_star_single),
            "V": value, "beneficial": bool(value > 0), "unique_flag": bool(cell.unique),
            "w_two": w2, "w_single": w1, "error": cell.error}


def to_csv(rows: Iterable[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_text(row.get(c)) for c in columns])
    return buf.getvalue()


def to_json(config: dict, rows: Sequence[dict], diagnostics: dict) -> str:
    doc = {"config": _json_value(config), "results": [_json_value(r) for r in rows],
           "diagnostics": _json_value(diagnostics)}
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def render(fmt: str, config: dict, rows: Sequence[dict], columns: Sequence[str],
           diagnostics: dict) -> str:
    if fmt == "csv":
        return to_csv(rows, columns)
    if fmt == "json":
        return to_json(config, rows, diagnostics)
    raise ValueError(f"unknown format {fmt!r}")


def read_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))
