import csv
import io
import json
import math
import subprocess
import sys

import pytest

from delaygame import io as out
from delaygame.cli import main
from delaygame.equilibrium import ModelParams
from delaygame.welfare import w_two_stage


def run(capsys, *argv):
    code = main(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_solve_small_sigma(capsys):
    code, text, err = run(capsys, "solve", "--sigma", "0.01", "--gamma", "0.5")
    assert code == 0
    rows = out.read_csv(text)
    assert [r["game"] for r in rows] == ["two_stage", "single_stage"]
    assert float(rows[0]["tau_star"]) == pytest.approx(1.0, abs=0.05)
    assert float(rows[1]["tau_star"]) == pytest.approx(0.5, abs=0.01)
    assert "dtau*/dgamma" in err


def test_solve_large_sigma_warns(capsys):
    code, text, err = run(capsys, "solve", "--sigma", "3.0", "--gamma", "0.5")
    assert code == 0
    assert "unique=false" in err
    assert out.read_csv(text)[0]["unique"] == "false"


def test_domain_error_exit(capsys):
    code, _, err = run(capsys, "solve", "--sigma", "0", "--gamma", "0.5")
    assert code == 2 and "sigma" in err


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as e:
        main(["solve", "--nope"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == 1
    assert run(capsys, "sweep", "--sigma-steps", "0")[0] == 1
    assert run(capsys, "welfare", "--tau-min", "1", "--tau-max", "0")[0] == 1
    assert run(capsys, "simulate", "--replications", "3")[0] == 1
    assert run(capsys, "simulate", "--population", "10", "--replications", "0")[0] == 1


def test_population_parsing(capsys):
    with pytest.raises(SystemExit) as e:
        main(["simulate", "--population", "ten"])
    assert e.value.code == 1
    assert run(capsys, "simulate", "--population", "1")[0] == 1


def test_io_error_exit(capsys, tmp_path):
    code, _, err = run(capsys, "solve", "--output", str(tmp_path / "missing" / "x.csv"))
    assert code == 3 and "I/O" in err


def test_welfare_curve(capsys):
    code, text, _ = run(capsys, "welfare", "--tau-min", "-3", "--tau-max", "3")
    assert code == 0
    rows = out.read_csv(text)
    w = [float(r["w_two_stage"]) for r in rows]
    i = max(range(len(w)), key=w.__getitem__)
    assert 0 < i < len(w) - 1
    assert all(a <= b for a, b in zip(w[:i], w[1:i + 1]))
    assert all(a >= b for a, b in zip(w[i:], w[i + 1:]))
    marks = [r["marker"] for r in rows if r["marker"]]
    assert any("tau_star" in m for m in marks) and any("tau_opt" in m for m in marks)
    # derivative column vs finite differences of the welfare column
    tau = [float(r["tau"]) for r in rows]
    d = [float(r["w_two_stage_dtau"]) for r in rows]
    for j in range(1, len(rows) - 1):
        fd = (w[j + 1] - w[j - 1]) / (tau[j + 1] - tau[j - 1])
        assert abs(fd - d[j]) < 1e-4


def test_welfare_single_point(capsys):
    code, text, _ = run(capsys, "welfare", "--tau-steps", "1")
    assert code == 0 and len(out.read_csv(text)) == 1


def test_json_matches_csv(capsys):
    args = ("welfare", "--tau-steps", "5")
    _, text_csv, _ = run(capsys, *args)
    _, text_json, _ = run(capsys, *args, "--format", "json")
    doc = json.loads(text_json)
    assert set(doc) == {"config", "results", "diagnostics"}
    for row_c, row_j in zip(out.read_csv(text_csv), doc["results"]):
        for k in ("tau", "w_two_stage", "w_single_stage", "w_two_stage_dtau"):
            assert float(row_c[k]) == float(row_j[k])


def test_sweep_roundtrip(capsys, tmp_path):
    path = tmp_path / "sweep.csv"
    code, _, _ = run(capsys, "sweep", "--sigma-min", "0.3", "--sigma-max", "2.5", "--sigma-steps",
                     "3", "--gamma-min", "0.2", "--gamma-max", "0.8", "--gamma-steps", "3",
                     "--output", str(path))
    assert code == 0
    rows = out.read_csv(path.read_text())
    assert [(float(r["sigma"]), float(r["gamma"])) for r in rows][:2] == [(0.3, 0.2), (0.3, 0.5)]
    for r in rows:
        v = out.rnd(float(r["w_two"]) - float(r["w_single"]))
        assert v == float(r["V"])


def test_sweep_failure_threshold(capsys):
    # gamma >= 1 cells fail; more than 10% failing gives a numeric exit
    code, text, _ = run(capsys, "sweep", "--sigma-steps", "1", "--gamma-min", "0.5",
                        "--gamma-max", "1.0", "--gamma-steps", "2")
    assert code == 2
    assert "DomainError" in out.read_csv(text)[1]["error"]


def test_simulate_deterministic(capsys, tmp_path):
    args = ["simulate", "--population", "300", "--replications", "4", "--seed", "9"]
    _, a, err = run(capsys, *args)
    _, b, _ = run(capsys, *args)
    assert a == b and "+/-" in err
    assert len(out.read_csv(a)) == 4
    traces = tmp_path / "t.csv"
    assert run(capsys, *args, "--traces", str(traces))[0] == 0
    assert len(out.read_csv(traces.read_text())) == 1200


def test_simulate_saturated(capsys):
    _, text, _ = run(capsys, "simulate", "--population", "50", "--replications", "5",
                     "--tau", "inf")
    assert all(float(r["S"]) == 1.0 for r in out.read_csv(text))


def test_simulate_welfare_oracle(capsys):
    _, text, _ = run(capsys, "simulate", "--population", "10000", "--replications", "100",
                     "--sigma", "0.5", "--gamma", "0.8", "--format", "json")
    doc = json.loads(text)
    w = w_two_stage(doc["diagnostics"]["tau"], ModelParams(0.5, 0.8))
    assert abs(doc["diagnostics"]["mean_welfare"] - w) < 3 * doc["diagnostics"]["standard_error"]


def test_config_file(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"sigma": 0.01, "gamma": 0.5}))
    _, text, _ = run(capsys, "solve", "--config", str(cfg))
    assert float(out.read_csv(text)[1]["tau_star"]) == pytest.approx(0.5, abs=0.01)
    # command-line flags win; gamma still comes from the file
    _, text, _ = run(capsys, "solve", "--config", str(cfg), "--sigma", "0.5")
    assert float(out.read_csv(text)[0]["tau_star"]) == pytest.approx(0.781797070197, abs=1e-8)
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(capsys, "solve", "--config", str(cfg))[0] == 1


def test_committed_defaults_parse(capsys):
    import pathlib
    path = pathlib.Path(__file__).resolve().parents[1] / "configs" / "defaults.json"
    assert run(capsys, "solve", "--config", str(path))[0] == 0


def test_verify_quick_and_canary(capsys):
    code, text, err = run(capsys, "verify", "--quick")
    assert code == 0
    rows = out.read_csv(text)
    assert rows and all(r["passed"] == "true" for r in rows)
    code, text, _ = run(capsys, "verify", "--quick", "--inject-bug")
    assert code == 2
    rows = {r["property"]: r["passed"] for r in out.read_csv(text)}
    assert rows["delta_monotone_below_slope_bound"] == "false"


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "delaygame", "solve", "--sigma", "0.5"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("game,")


def test_help_lists_defaults():
    res = subprocess.run([sys.executable, "-m", "delaygame", "sweep", "--help"],
                         capture_output=True, text=True)
    assert "default: 50" in res.stdout and "--inject-bug" not in res.stdout
