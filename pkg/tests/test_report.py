import json
import subprocess
import sys
from fractions import Fraction

import jsonschema
import pytest

from racebox.report import (
    REPORT_SCHEMA,
    ProgramMismatch,
    RunConfig,
    analyze_source,
    diff_reports,
    report_to_json,
)

F = Fraction

SRC_ALARM = "var x;\nthread 1 { x <- 1 / [0,1]; }\n"
SRC_CLEAN = "var x;\nthread 1 { x <- 1 / [1,2]; }\n"


@pytest.mark.parametrize("mode", ["seq", "interference", "scheduled",
                                  "oracle-interleave", "oracle-scheduled",
                                  "oracle-interference", "fuzz"])
def test_schema_valid_all_modes(mode):
    rep = analyze_source(SRC_ALARM, RunConfig(mode=mode, unroll=1))
    jsonschema.validate(json.loads(report_to_json(rep)), REPORT_SCHEMA)


def test_reports_byte_deterministic():
    cfg = RunConfig(mode="scheduled")
    a = report_to_json(analyze_source(SRC_ALARM, cfg))
    b = report_to_json(analyze_source(SRC_ALARM, cfg))
    assert a == b
    cfg2 = RunConfig(mode="fuzz", seed=3)
    assert (report_to_json(analyze_source(SRC_CLEAN, cfg2))
            == report_to_json(analyze_source(SRC_CLEAN, cfg2)))


def test_alarm_reports_sorted_by_position():
    src = "thread 1 { b <- 1 / y; a <- 1 / x; }\n"
    rep = analyze_source(src, RunConfig(mode="seq"))
    cols = [(a["line"], a["col"]) for a in rep["alarms"]]
    assert cols == sorted(cols)
    assert all(a["kind"] == "div-by-zero" for a in rep["alarms"])


def test_exit_codes_in_report():
    assert analyze_source(SRC_ALARM, RunConfig(mode="seq"))["exit_code"] == 1
    assert analyze_source(SRC_CLEAN, RunConfig(mode="seq"))["exit_code"] == 0


def test_config_echoed():
    cfg = RunConfig(mode="interference", unroll=5, seed=9,
                    thresholds=(F(0), F(7)))
    rep = analyze_source(SRC_CLEAN, cfg)
    assert rep["config"]["unroll"] == 5
    assert rep["config"]["seed"] == 9
    assert rep["config"]["thresholds"] == ["0", "7"]


def test_timing_null_by_default():
    rep = analyze_source(SRC_CLEAN, RunConfig(mode="seq"))
    assert rep["timing_s"] is None
    rep2 = analyze_source(SRC_CLEAN, RunConfig(mode="seq", timing=True))
    assert isinstance(rep2["timing_s"], float)


def test_diff_reports_identical():
    a = analyze_source(SRC_ALARM, RunConfig(mode="interference"))
    b = analyze_source(SRC_ALARM, RunConfig(mode="interference"))
    d = diff_reports(a, b)
    assert d["alarms_a_in_b"] and d["alarms_b_in_a"]
    assert d["races_a_in_b"] and d["races_b_in_a"]


def test_diff_reports_scheduled_vs_interference(corpus_source):
    src = corpus_source("priority_mutex")
    # make the spurious interference value reach a division so the two
    # modes produce different alarm sets
    src = src.replace("t <- y - z;", "t <- y - z; w <- 1 / (1 - (y - z));")
    sched = analyze_source(src, RunConfig(mode="scheduled"))
    interf = analyze_source(src, RunConfig(mode="interference"))
    d = diff_reports(sched, interf)
    assert d["alarms_a_in_b"]
    assert not d["alarms_b_in_a"]


def test_diff_reports_mismatch():
    a = analyze_source(SRC_ALARM, RunConfig(mode="seq"))
    b = analyze_source(SRC_CLEAN, RunConfig(mode="seq"))
    with pytest.raises(ProgramMismatch):
        diff_reports(a, b)


def test_check_against_verdicts():
    rep = analyze_source(SRC_ALARM, RunConfig(mode="oracle-interleave",
                                              check_against="interference"))
    assert rep["check"]["verdict"] == "PASS"


def test_oracle_interference_divergence_is_budget_failure(corpus_source):
    rep = analyze_source(corpus_source("increment"),
                         RunConfig(mode="oracle-interference"))
    assert not rep["oracle"]["converged"]
    assert rep["exit_code"] == 3


def test_self_interference_flag_changes_result():
    src = "var x;\nthread 1 { x <- x + 1; }\n"
    plain = analyze_source(src, RunConfig(mode="interference"))
    multi = analyze_source(src, RunConfig(mode="interference",
                                          self_interference=(1,)))
    assert plain["interferences"]["t1/x"] == "[1,1]"
    assert multi["interferences"]["t1/x"] == "[1,inf]"


# -- command line


def run_cli(*args, color=None):
    import os

    env = dict(os.environ)
    env["THESEE_MINI_COLOR"] = color if color is not None else "0"
    return subprocess.run(
        [sys.executable, "-m", "racebox.cli", *args],
        capture_output=True, text=True, env=env)


def test_cli_exit_zero_no_alarms(tmp_path):
    f = tmp_path / "p.conc"
    f.write_text(SRC_CLEAN)
    r = run_cli(str(f), "--mode", "scheduled")
    assert r.returncode == 0
    assert "no alarms" in r.stdout


def test_cli_exit_one_on_alarms(tmp_path):
    f = tmp_path / "p.conc"
    f.write_text(SRC_ALARM)
    r = run_cli(str(f), "--mode", "scheduled")
    assert r.returncode == 1
    assert "alarm" in r.stdout


def test_cli_exit_two_on_parse_error(tmp_path):
    f = tmp_path / "p.conc"
    f.write_text("thread 1 { x <- ; }")
    r = run_cli(str(f))
    assert r.returncode == 2


def test_cli_json_output_and_out_file(tmp_path):
    f = tmp_path / "p.conc"
    f.write_text(SRC_ALARM)
    out = tmp_path / "rep.json"
    r = run_cli(str(f), "--mode", "interference", "--json",
                "--out", str(out))
    assert r.returncode == 1
    rep = json.loads(out.read_text())
    jsonschema.validate(rep, REPORT_SCHEMA)
    assert rep["mode"] == "interference"


def test_cli_check_against(tmp_path, corpus_source):
    f = tmp_path / "p.conc"
    f.write_text(corpus_source("priority_mutex"))
    r = run_cli(str(f), "--mode", "oracle-scheduled",
                "--check-against", "scheduled")
    assert r.returncode == 0
    assert "PASS" in r.stdout


def test_cli_color_env_var(tmp_path):
    f = tmp_path / "p.conc"
    f.write_text(SRC_CLEAN)
    plain = run_cli(str(f), color="0").stdout
    colored = run_cli(str(f), color="1").stdout
    assert "\033[" not in plain
    assert "\033[" in colored


def test_cli_exit_three_on_budget_failure(tmp_path):
    f = tmp_path / "p.conc"
    f.write_text("thread 1 { x <- [0,3]; y <- [0,3]; }"
                 "thread 2 { x <- [0,3]; y <- [0,3]; }")
    r = run_cli(str(f), "--mode", "oracle-interleave", "--budget-states", "5")
    assert r.returncode == 3


def test_cli_thresholds_flag(tmp_path, corpus_source):
    f = tmp_path / "p.conc"
    f.write_text(corpus_source("producer_consumer"))
    r = run_cli(str(f), "--mode", "scheduled",
                "--thresholds", "-10000,-1,0,1,10,10000", "--json")
    rep = json.loads(r.stdout)
    assert rep["var_ranges"]["x"]["hull"] == "[0,10]"
