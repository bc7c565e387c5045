import csv
import json
import math

import pytest

from fel.cli import main


def run(tmp_path, doc, command=None, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    out = tmp_path / ("out_" + name.split(".")[0])
    code = main([command or doc["command"], "--config", str(path), "--out", str(out)])
    return code, out


def read_report(out):
    return json.loads((out / "report.json").read_text())


def test_energy_of_the_clifford_torus(tmp_path):
    code, out = run(tmp_path, {"command": "energy", "immersion": {"kind": "clifford"}, "grid": {"n1": 32}})
    assert code == 0
    rep = read_report(out)
    assert rep["passed"] and len(rep["config_hash"]) == 64
    assert rep["results"]["relative_error_to_2pi2"] < 1e-8
    assert rep["grid"]["n1"] == 32 and "rel_tol" in rep["tolerances"]


@pytest.mark.parametrize("doc", [
    {"command": "energy"},
    {"command": "energy", "immersion": {"kind": "rotational", "R": 0.5, "r": 1.0}},
    {"command": "energy", "immersion": {"kind": "clifford"}, "bogus": 1},
    {"command": "minimize", "immersion": {"kind": "clifford"}, "descent": {"step_size": 1.0}},
    {"command": "sweep", "sweep": {"quantity": "f", "parameters": {"tau2": [1.0]}}},
])
def test_malformed_config_writes_nothing(tmp_path, doc):
    code, out = run(tmp_path, doc)
    assert code == 2
    assert not out.exists()


def test_unreadable_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["energy", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_command_mismatch_is_a_config_error(tmp_path):
    code, out = run(tmp_path, {"command": "energy", "immersion": {"kind": "clifford"}}, command="bound")
    assert code == 2 and not out.exists()


def test_outputs_are_byte_identical(tmp_path):
    doc = {"command": "bound", "immersion": {"kind": "fourier", "base": {"kind": "clifford"}, "amplitude": 0.02},
           "grid": {"n1": 64}, "count": 2, "seed": 3}
    _, a = run(tmp_path, doc, name="a.json")
    _, b = run(tmp_path, doc, name="b.json")
    for name in ("report.json", "table.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_bound_table(tmp_path):
    doc = {"command": "bound", "immersion": {"kind": "fourier", "base": {"kind": "rotational", "R": 2.0},
                                             "amplitude": 0.02}, "grid": {"n1": 64}, "count": 2}
    code, out = run(tmp_path, doc)
    rows = list(csv.DictReader((out / "table.csv").open()))
    assert code == 0 and len(rows) == 2
    assert all(float(r["F"]) >= 2 * math.pi**2 for r in rows)
    assert read_report(out)["results"]["passed_members"] == 2


def test_empty_sweep_writes_only_the_header(tmp_path):
    doc = {"command": "sweep", "sweep": {"quantity": "f", "parameters": {"tau2": [], "theta": [1.2]}}}
    code, out = run(tmp_path, doc)
    assert code == 0
    assert (out / "table.csv").read_text() == "tau2,theta,tau1,f,in_M,in_omega,outside_omega\n"
    assert read_report(out)["results"]["points"] == 0


def test_f_sweep(tmp_path):
    doc = {"command": "sweep", "sweep": {"quantity": "f", "parameters": {
        "tau2": {"start": 0.8, "stop": 2.0, "num": 50},
        "theta": {"start": math.pi / 3, "stop": math.pi / 2, "num": 50}}}}
    code, out = run(tmp_path, doc)
    res = read_report(out)["results"]
    assert code == 0 and res["points"] == 2500
    assert res["min_outside_omega"] >= 2 - 1e-12


def test_energy_sweep(tmp_path):
    doc = {"command": "sweep", "immersion": {"kind": "rotational"}, "grid": {"n1": 32},
           "sweep": {"quantity": "energy", "parameters": {"R": [1.5, 2.0]}}}
    code, out = run(tmp_path, doc)
    rows = list(csv.DictReader((out / "table.csv").open()))
    assert code == 0 and [float(r["R"]) for r in rows] == [1.5, 2.0]


def test_numerical_failure_writes_only_a_diagnostic(tmp_path):
    # a torus of revolution is not critical, so the conserved current is refused
    doc = {"command": "conservation", "immersion": {"kind": "rotational"}, "grid": {"n1": 64}}
    code, out = run(tmp_path, doc)
    assert code == 1
    assert sorted(p.name for p in out.iterdir()) == ["diagnostic.json"]
    diag = json.loads((out / "diagnostic.json").read_text())
    assert diag["error"] == "NotCriticalError" and diag["diagnostic"]["el_relative"] > 1


@pytest.mark.parametrize("kind,expect,code", [("rotational", "standard", 0), ("figure8", "standard", 1),
                                              ("figure8", "nonstandard", 0)])
def test_classify_against_expectation(tmp_path, kind, expect, code):
    doc = {"command": "classify", "immersion": {"kind": kind}, "expect": expect}
    got, out = run(tmp_path, doc)
    assert got == code
    assert read_report(out)["results"]["expect"] == expect


def test_short_minimize_writes_field(tmp_path):
    doc = {"command": "minimize", "immersion": {"kind": "fourier", "amplitude": 0.05}, "grid": {"n1": 32},
           "descent": {"max_iter": 3}}
    _, out = run(tmp_path, doc)
    assert {"report.json", "table.csv", "field.json"} <= {p.name for p in out.iterdir()}
    assert read_report(out)["results"]["steps"] <= 3
