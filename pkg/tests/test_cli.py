from __future__ import annotations

import json
import os
import subprocess
import sys

import pytest

from fptestgen.cli import BENCHMARKS, EXIT, RunReport, expected_status, judge, main
from fptestgen.floats import parse_float
from fptestgen.frontend import concrete_eval, parse_program


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write(tmp_path, text, name="prog.fps"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# -- solve --------------------------------------------------------------------------------


def test_solve_heron_lower(capsys):
    code, out, _ = run(capsys, "solve", "heron", "--out", "json", "--timeout", "60")
    report = json.loads(out)
    assert code == 0 and report["status"] == "Sat" and report["verified"] is True
    assert set(report) >= {"status", "witness", "target", "verified", "strategy", "stats", "path"}
    assert set(report["witness"]) == {"a", "b", "c"}
    assert set(report["stats"]) == {"nodes", "propagations", "time_ms"}
    w = {n: parse_float(v["dec"]) for n, v in report["witness"].items()}
    trace = concrete_eval(parse_program(open_corpus("heron")), w)
    assert trace.target < -1e-5
    assert all(v["hex"].startswith("0x") for v in report["witness"].values())


def open_corpus(name):
    from fptestgen.cli import corpus_text

    return corpus_text(name)


def test_json_report_round_trip(capsys):
    _, out, _ = run(capsys, "solve", "slope", "--out", "json")
    report = RunReport.from_json(out)
    assert RunReport.from_json(report.to_json()) == report
    assert json.loads(report.to_json()) == json.loads(out)


def test_text_report(capsys):
    code, out, _ = run(capsys, "solve", "slope")
    assert code == 0
    assert out.startswith("status: Sat\n") and "verified: true" in out and "x0 = 13" in out


@pytest.mark.parametrize("interval, code", [
    ("[0, 25)", 0), ("(27, 25943]", 0), ("[0, 16)", 1), ("(36, 25943]", 1),
])
def test_exit_codes_follow_status(capsys, interval, code):
    got, out, _ = run(capsys, "solve", "slope", "--suspect", interval, "--out", "json")
    assert got == code == EXIT[json.loads(out)["status"]]


def test_unknown_and_not_found_exit_2(capsys):
    code, out, _ = run(capsys, "solve", "heron", "--suspect", "(156.251, 979.01]",
                       "--node-limit", "2", "--out", "json")
    assert code == 2 and json.loads(out)["status"] == "Unknown"
    code, out, _ = run(capsys, "solve", "heron", "--strategy", "fpc3s", "--out", "json")
    report = json.loads(out)
    assert code == 2 and report["status"] == "NotFound" and report["witness"] == {}
    assert report["strategy"] == "fpc3s"


def test_missing_annotation_is_usage_error(capsys, tmp_path):
    path = write(tmp_path, "input x in [0, 1];\ny = x;\n")
    code, _, err = run(capsys, "solve", path)
    assert code == 3 and "@suspect" in err


def test_parse_error_reports_position(capsys, tmp_path):
    path = write(tmp_path, "input x in [0, 1];\ny = x +;\n@suspect y in [0, 1];\n")
    code, _, err = run(capsys, "solve", path)
    assert code == 3 and f"{path}:2:" in err


def test_usage_errors(capsys, tmp_path):
    assert run(capsys, "solve", str(tmp_path / "missing.fps"))[0] == 3
    assert run(capsys, "solve", "heron", "--strategy", "nope")[0] == 3
    assert run(capsys, "solve", "heron", "--suspect", "[2, 1]")[0] == 3
    assert run(capsys, "frobnicate")[0] == 3


def test_report_file_is_written(capsys, tmp_path):
    target = tmp_path / "out.json"
    code, out, _ = run(capsys, "solve", "polynomial", "--report", str(target))
    assert code == 0 and out.startswith("status: Sat")
    assert json.loads(target.read_text())["status"] == "Sat"
    assert [p.name for p in tmp_path.iterdir()] == ["out.json"]


def test_digest_identifies_the_program(capsys):
    _, a, _ = run(capsys, "solve", "slope", "--out", "json")
    _, b, _ = run(capsys, "solve", "polynomial", "--out", "json")
    assert json.loads(a)["digest"] != json.loads(b)["digest"]


# -- eval ----------------------------------------------------------------------------------


def test_eval_known_witness(capsys):
    code, out, _ = run(capsys, "eval", "heron", "--input", "a=5.517474", "--input", "b=4.7105823",
                       "--input", "c=0.8068917")
    assert code == 0
    assert "-0.000010000001" in out and "0xB727C5AD" in out
    assert "inside the suspicious interval" in out
    assert "path: T @" in out


def test_eval_slope_real_column(capsys):
    code, out, _ = run(capsys, "eval", "slope", "--input", "x0=13", "--input", "h=0.0005", "--out", "json")
    data = json.loads(out)
    res = [r for r in data["values"] if r["name"] == "res"][0]
    assert code == 0 and res["real"] == "26.0" and res["dec"] != "26"


def test_eval_polynomial(capsys):
    code, out, _ = run(capsys, "eval", "polynomial", "--input", "a=1000", "--input", "b=0",
                       "--input", "c=1000", "--out", "json")
    data = json.loads(out)
    assert data["target"]["value"]["dec"] == "1000000000.0"
    assert data["target"]["in_interval"] is True


def test_eval_out_of_range_warns(capsys):
    code, out, err = run(capsys, "eval", "slope", "--input", "x0=12", "--input", "h=0.0005")
    assert code == 0 and "warning: input x0 outside declared range" in err
    assert "res" in out


def test_eval_input_errors(capsys):
    assert run(capsys, "eval", "slope", "--input", "x0=13")[0] == 3
    assert run(capsys, "eval", "slope", "--input", "x0=13", "--input", "h=abc")[0] == 3
    assert run(capsys, "eval", "slope", "--input", "x0=13", "--input", "q=1", "--input", "h=0.001")[0] == 3


# -- gentest -------------------------------------------------------------------------------


def test_gentest_finds_slope_and_is_reproducible(capsys):
    code, a, _ = run(capsys, "gentest", "slope", "--seed", "3", "--out", "json")
    _, b, _ = run(capsys, "gentest", "slope", "--seed", "3", "--out", "json")
    ra, rb = json.loads(a), json.loads(b)
    assert code == 0 and ra["status"] == "Sat" and ra["verified"]
    assert ra["witness"] == rb["witness"] and ra["stats"]["nodes"] == rb["stats"]["nodes"]


def test_gentest_heron_budget(capsys):
    code, out, _ = run(capsys, "gentest", "heron", "--trials", "3000", "--out", "json")
    report = json.loads(out)
    assert code == 2 and report["status"] == "NotFound" and report["stats"]["nodes"] == 3000


# -- bench ---------------------------------------------------------------------------------


def test_bench_slope_rows(capsys):
    code, out, _ = run(capsys, "bench", "--only", "slope", "--only", "polynomial", "--strategies", "fpc,fpc3s")
    lines = [l for l in out.splitlines() if l.startswith(("slope", "polynomial"))]
    assert code == 0 and len(lines) == 10
    assert "MISMATCH" not in out
    assert "simple_interpolator" in out and "pending" in out


def test_bench_table_expectations():
    assert len(BENCHMARKS) == 10
    cells = {(b.program, b.interval): b for b in BENCHMARKS}
    heron_eps = cells[("heron", "(156.251, 979.01]")]
    assert expected_status(heron_eps, "fpc") == "Unsat"
    assert expected_status(heron_eps, "std") is None
    slope_far = cells[("slope", "(36, 25943]")]
    assert expected_status(slope_far, "fpc3s") == "NotFound"
    assert judge(slope_far, "fpc3s", "Unsat") == "mismatch"
    assert judge(slope_far, "fpc", "Unknown") == "mismatch"
    opt_low = cells[("optimized_heron", "[-1262.21, -0.00001)")]
    # a real witness found by the incomplete strategy is reported, not failed
    assert judge(opt_low, "fpc3s", "Sat") == "differs"


def test_module_entry_point():
    env = dict(os.environ, FPCS_LOG="stats")
    proc = subprocess.run([sys.executable, "-m", "fptestgen", "solve", "slope", "--suspect", "[0, 16)"],
                          capture_output=True, text=True, env=env, timeout=120)
    assert proc.returncode == 1
    assert "status: Unsat" in proc.stdout
    assert "nodes=" in proc.stderr
