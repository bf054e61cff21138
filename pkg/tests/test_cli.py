"""Command-line interface: outputs, schema validation, reproducibility."""

import csv
import json
import math
from fractions import Fraction
from pathlib import Path

import pytest

from gasketlab.cli import main
from gasketlab.errors import UsageError
from gasketlab.problems import validate_problem_dict


def run(args):
    return main([str(a) for a in args])


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_graph_export(tmp_path):
    out = tmp_path / "g.json"
    assert run(["graph", "--level", 1, "--out", out]) == 0
    doc = json.loads(out.read_text())
    assert doc["level"] == 1 and len(doc["vertices"]) == 6
    meta = json.loads((tmp_path / "g.json.meta.json").read_text())
    assert "config_hash" in meta and meta["version"]


def test_harmonic_csv(tmp_path):
    out = tmp_path / "h.csv"
    assert run(["harmonic", "--boundary", "1,0,0", "--level", 1, "--out", out]) == 0
    header, rows = read_csv(out)
    assert header == ["vertex_id", "x", "y", "value"]
    assert len(rows) == 6
    vals = sorted(float(r[3]) for r in rows)
    assert vals == sorted([1.0, 0.0, 0.0, 0.4, 0.4, 0.2])


def test_measure_nu_level2(tmp_path):
    out = tmp_path / "nu.csv"
    assert run(["measure", "--kind", "nu", "--level", 2, "--out", out]) == 0
    header, rows = read_csv(out)
    assert header == ["word", "mass_numerator", "mass_denominator", "mass_float"]
    assert len(rows) == 9
    total = sum(Fraction(int(r[1]), int(r[2])) for r in rows)
    assert total == 1


def test_measure_energy_requires_boundary(tmp_path, capsys):
    rc = run(["measure", "--kind", "energy", "--level", 1,
              "--out", tmp_path / "e.csv"])
    assert rc == 2
    assert "boundary" in capsys.readouterr().err


def test_walk_paths_csv(tmp_path):
    out = tmp_path / "w.csv"
    assert run(["walk", "--level", 1, "--paths", 3, "--horizon", 0.2,
                "--seed", 5, "--emit", "paths", "--out", out]) == 0
    header, rows = read_csv(out)
    assert header == ["path_id", "step", "vertex_id", "dW", "dQV", "cumQV", "hit_flag"]
    steps = int(round(0.2 / (5.0**-1 / 3)))
    assert len(rows) == 3 * steps


def test_walk_stats_and_histogram(tmp_path):
    rep = tmp_path / "s.json"
    assert run(["walk", "--level", 2, "--paths", 500, "--horizon", 1.0,
                "--killed", "--start", "0", "--emit", "stats", "--out", rep]) == 0
    doc = json.loads(rep.read_text())
    assert "qv" in doc and "exit_time" in doc

    out = tmp_path / "h.csv"
    assert run(["walk", "--level", 2, "--paths", 500, "--horizon", 1.0,
                "--emit", "histogram", "--cell-level", 1, "--out", out]) == 0
    header, rows = read_csv(out)
    assert header == ["word", "mass"]
    assert abs(sum(float(r[1]) for r in rows) - 1.0) < 1e-9


PROBLEM = {
    "driver": {"name": "linear", "a": 0.3, "b": 0.2, "c": 0.1},
    "terminal": {"name": "bump"},
    "duration": {"kind": "killed", "T": 0.5},
}


def test_bsde_and_pde_outputs(tmp_path):
    pf = tmp_path / "p.json"
    pf.write_text(json.dumps(PROBLEM))
    bs = tmp_path / "sol.csv"
    assert run(["bsde", "--problem", pf, "--level", 2, "--stride", 25,
                "--out", bs]) == 0
    header, rows = read_csv(bs)
    assert header == ["step", "vertex_id", "Y", "Z"]

    ps = tmp_path / "u.csv"
    assert run(["pde", "--problem", pf, "--level", 2, "--stride", 25,
                "--out", ps]) == 0
    header, rows = read_csv(ps)
    assert header == ["layer", "vertex_id", "u"]
    gheader, _ = read_csv(str(ps) + ".gradients.csv")
    assert gheader == ["layer", "word", "grad"]


def test_check_fk_decreasing_column(tmp_path):
    pf = tmp_path / "p.json"
    pf.write_text(json.dumps(PROBLEM))
    out = tmp_path / "fk.csv"
    assert run(["check", "fk", "--problem", pf, "--levels", "2,3",
                "--probe-times", "0.0,0.25", "--out", out]) == 0
    header, rows = read_csv(out)
    assert header == ["level", "sup_error"]
    sups = [float(r[1]) for r in rows]
    assert sups[1] < sups[0]


def test_check_identity(tmp_path):
    out = tmp_path / "id.json"
    assert run(["check", "identity", "--levels", "1,3", "--out", out]) == 0
    doc = json.loads(out.read_text())
    assert doc["1"]["exact_zero"] and doc["3"]["exact_zero"]


def test_check_bounds_beta_chain(tmp_path):
    out = tmp_path / "bc.json"
    assert run(["check", "bounds", "--which", "beta-chain", "--out", out]) == 0
    doc = json.loads(out.read_text())
    assert all(case["rel_gap"] <= 1e-6 for case in doc["cases"])


def test_check_contraction(tmp_path):
    out = tmp_path / "c.json"
    assert run(["check", "contraction", "--level", 2, "--paths", 100,
                "--iters", 6, "--out", out]) == 0
    doc = json.loads(out.read_text())
    assert doc["all_below_bound"]
    assert abs(doc["bound"] - 1.0) < 1e-12


def test_empty_config_usage_error(capsys):
    assert run([]) == 2


def test_problem_schema_violation(tmp_path, capsys):
    pf = tmp_path / "bad.json"
    pf.write_text(json.dumps({"driver": {"name": "nope"},
                              "terminal": {"name": "bump"},
                              "duration": {"kind": "killed", "T": 1.0}}))
    rc = run(["bsde", "--problem", pf, "--level", 1, "--out", tmp_path / "x.csv"])
    assert rc == 2
    err = capsys.readouterr().err
    assert "driver/name" in err


def test_problem_schema_missing_field():
    with pytest.raises(UsageError) as exc:
        validate_problem_dict({"driver": {"name": "zero"}})
    assert "terminal" in str(exc.value) or "required" in str(exc.value)


def test_reproducibility_across_workers(tmp_path):
    outs = []
    for workers, name in ((1, "a.csv"), (3, "b.csv")):
        out = tmp_path / name
        assert run(["--seed", "11", "--workers", workers,
                    "walk", "--level", 2, "--paths", 600, "--horizon", 0.5,
                    "--emit", "paths", "--out", out]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_measure_json_format(tmp_path):
    out = tmp_path / "nu.json"
    assert run(["--format", "json", "measure", "--kind", "nu", "--level", 1,
                "--out", out]) == 0
    doc = json.loads(out.read_text())
    assert len(doc) == 3
    assert {r["word"] for r in doc} == {"1", "2", "3"}


def test_bsde_dt_override(tmp_path):
    pf = tmp_path / "p.json"
    pf.write_text(json.dumps(PROBLEM))
    out = tmp_path / "sol.csv"
    assert run(["bsde", "--problem", pf, "--level", 1, "--dt-per-step", 0.05,
                "--stride", 100, "--out", out]) == 0
    _, rows = read_csv(out)
    steps = {int(r[0]) for r in rows}
    assert max(steps) <= int(round(0.5 / 0.05))
