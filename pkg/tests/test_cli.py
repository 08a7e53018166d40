import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from etmetric import cli
from etmetric.checks import CheckResult
from etmetric.jsonio import (SpaceFileError, dumps, load_space, parse_space, save_space,
                             space_to_doc)
from etmetric.mmspace import MetricMeasureSpace


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


PAIR = {"dist": [[0, 1], [1, 0]], "mass": [0.5, 1.5]}


# -- space files ---------------------------------------------------------------

def test_points_documents_are_turned_into_euclidean_distances():
    space = parse_space({"points": [[0, 0], [3, 4]], "mass": [1, 2]})
    assert space.dist[0, 1] == 5.0


@pytest.mark.parametrize("doc", [
    {"dist": [[0, 1], [1, 0]]},
    {"mass": [1]},
    {"dist": [[0, 5, 1], [5, 0, 1], [1, 1, 0]], "mass": [1, 1, 1]},
    {"dist": [[0, 1], [1, 0]], "mass": [1, "x"]},
    {"points": [[0, 0]], "metric": "manhattan", "mass": [1]},
    {"dist": [[0, -1], [-1, 0]], "mass": [1, 1]},
    [1, 2, 3],
])
def test_invalid_space_documents_are_rejected(doc):
    with pytest.raises(SpaceFileError):
        parse_space(doc)


@given(arrays(float, st.tuples(st.integers(1, 5), st.integers(1, 3)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)),
       st.data())
def test_space_files_round_trip_bit_for_bit(points, data):
    mass = data.draw(arrays(float, len(points), elements=st.floats(0, 1e6)))
    space = MetricMeasureSpace.from_points(points, mass)
    again = parse_space(json.loads(dumps(space_to_doc(space))))
    assert np.array_equal(again.dist, space.dist)
    assert np.array_equal(again.mass, space.mass)


def test_save_and_load_keep_labels(tmp_path):
    space = MetricMeasureSpace([[0, 0.1], [0.1, 0]], [1 / 3, 2 / 3], ["a", "b"])
    save_space(space, tmp_path / "s.json")
    loaded = load_space(tmp_path / "s.json")
    assert loaded.labels == ("a", "b") and np.array_equal(loaded.mass, space.mass)


def test_json_numbers_use_seventeen_digits_and_null_for_infinity():
    assert dumps(0.1) == "0.10000000000000001"
    assert dumps([math.inf, -math.inf, math.nan]) == "[null, null, null]"
    assert json.loads(dumps({"x": np.float64(1 / 3)}))["x"] == 1 / 3


# -- dist --------------------------------------------------------------------------

def test_measure_mode_on_identical_files_is_zero(tmp_path, capsys):
    a = write(tmp_path / "a.json", PAIR)
    code, out, _ = run(capsys, "dist", a, a, "--mode", "measure")
    assert code == 0 and json.loads(out)["value"] == 0.0


def test_sturm_mode_on_permuted_copies_is_zero(tmp_path, capsys):
    a = write(tmp_path / "a.json", PAIR)
    b = write(tmp_path / "b.json", {"dist": [[0, 1], [1, 0]], "mass": [1.5, 0.5]})
    code, out, _ = run(capsys, "dist", a, b, "--seeds", "2")
    assert code == 0 and json.loads(out)["value"] <= 1e-6


def test_singletons_of_mass_one_and_four_are_at_hk_distance_one(tmp_path, capsys):
    a = write(tmp_path / "a.json", {"dist": [[0]], "mass": [1]})
    b = write(tmp_path / "b.json", {"dist": [[0]], "mass": [4]})
    code, out, _ = run(capsys, "dist", a, b, "--verify")
    rec = json.loads(out)
    assert code == 0
    assert rec["value"] == pytest.approx(1.0, abs=1e-9)
    assert set(rec) >= {"value", "preset", "a", "gamma", "cross_dist", "breakdown",
                        "diagnostics", "version"}
    assert rec["diagnostics"]["roundtrip_error"] <= 1e-9


def test_record_reproduces_its_value_from_plan_and_cross_block(tmp_path, capsys):
    from etmetric.sturm import SturmProblem, joint_objective
    a = write(tmp_path / "a.json", PAIR)
    b = write(tmp_path / "b.json", {"points": [[0, 0], [0, 2], [1, 1]], "mass": [1, 1, 0.5]})
    code, out, _ = run(capsys, "dist", a, b, "--preset", "ghk", "--seeds", "2")
    rec = json.loads(out)
    problem = SturmProblem.from_preset(load_space(a), load_space(b), "ghk")
    raw = joint_objective(problem, np.array(rec["gamma"]), np.array(rec["cross_dist"]))
    assert raw ** rec["a"] == pytest.approx(rec["value"], rel=1e-12)


def test_output_is_deterministic(tmp_path, capsys):
    a = write(tmp_path / "a.json", PAIR)
    b = write(tmp_path / "b.json", {"dist": [[0, 2], [2, 0]], "mass": [1, 1]})
    first = run(capsys, "dist", a, b, "--seeds", "3", "--seed", "7")[1]
    second = run(capsys, "dist", a, b, "--seeds", "3", "--seed", "7")[1]
    assert first == second


def test_infinite_values_are_flagged(tmp_path, capsys):
    a = write(tmp_path / "a.json", {"dist": [[0]], "mass": [1]})
    b = write(tmp_path / "b.json", {"dist": [[0]], "mass": [2]})
    code, out, _ = run(capsys, "dist", a, b, "--preset", "wp:2")
    rec = json.loads(out)
    assert code == 0 and rec["value"] is None and rec["value_finite"] is False


@pytest.mark.parametrize("argv", [
    ["dist", "{missing}", "{a}"],
    ["dist", "{bad}", "{a}"],
    ["dist", "{a}", "{a}", "--preset", "nope"],
    ["dist", "{a}", "{other}", "--mode", "measure"],
    ["dist", "{a}"],
    ["dist", "{a}", "{a}", "--epsilon-schedule", "0.1,-1"],
])
def test_validation_errors_exit_with_code_one(tmp_path, capsys, argv):
    (tmp_path / "bad.json").write_text("{not json")
    paths = {"a": write(tmp_path / "a.json", PAIR),
             "other": write(tmp_path / "o.json", {"dist": [[0, 3], [3, 0]], "mass": [1, 1]}),
             "missing": str(tmp_path / "nothing.json"), "bad": str(tmp_path / "bad.json")}
    code, _, err = run(capsys, *[x.format(**paths) for x in argv])
    assert code == 1
    assert json.loads(err.strip().splitlines()[-1])["error"]["exit_code"] == 1


# -- gram --------------------------------------------------------------------------

def test_gram_of_a_duplicated_space_is_zero(tmp_path, capsys):
    for name in "abc":
        write(tmp_path / f"{name}.json", PAIR)
    code, out, _ = run(capsys, "gram", str(tmp_path), "--jobs", "1", "--seeds", "2")
    rec = json.loads(out)
    assert code == 0 and rec["files"] == ["a.json", "b.json", "c.json"]
    assert np.abs(np.array(rec["matrix"])).max() <= 1e-6


def test_gram_of_two_singletons(tmp_path, capsys):
    write(tmp_path / "one.json", {"dist": [[0]], "mass": [1]})
    write(tmp_path / "four.json", {"dist": [[0]], "mass": [4]})
    code, out, _ = run(capsys, "gram", str(tmp_path), "--jobs", "2")
    matrix = np.array(json.loads(out)["matrix"])
    assert code == 0
    assert np.array_equal(matrix, matrix.T)
    assert matrix[0, 1] == pytest.approx(1.0, abs=1e-9)
    assert np.all(np.diag(matrix) <= 1e-9)


def test_gram_records_failed_pairs_and_continues(tmp_path, capsys):
    write(tmp_path / "a.json", PAIR)
    write(tmp_path / "b.json", {"dist": [[0, 1], [1, 0]], "mass": [1, 1]})
    (tmp_path / "c.json").write_text("[]")
    code, out, _ = run(capsys, "gram", str(tmp_path), "--jobs", "1", "--seeds", "2")
    rec = json.loads(out)
    assert code == 2
    assert rec["matrix"][0][1] is not None and rec["matrix"][0][2] is None
    assert {tuple(e["files"]) for e in rec["errors"]} >= {("a.json", "c.json")}


def test_gram_needs_two_files(tmp_path, capsys):
    write(tmp_path / "a.json", PAIR)
    code, _, err = run(capsys, "gram", str(tmp_path))
    assert code == 1 and "CorpusError" in err


# -- check -------------------------------------------------------------------------

def test_check_suite_passes_at_small_scale(capsys):
    code, out, _ = run(capsys, "check", "conic", "--scale", "0.02")
    rec = json.loads(out)
    assert code == 0 and rec["passed"]
    assert rec["suites"][0]["checks"][0]["criterion"] == 11


def test_failed_checks_exit_with_code_three(capsys, monkeypatch):
    import etmetric.checks as checks
    failing = CheckResult(99, "always fails", False, -1.0, 1)
    monkeypatch.setattr(checks, "run_suite", lambda *a, **k: [failing])
    code, out, _ = run(capsys, "check", "bounds")
    assert code == 3 and json.loads(out)["passed"] is False


def test_console_script_reports_its_version():
    res = subprocess.run([sys.executable, "-m", "etmetric", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("etmetric ")
