"""Tests for the dfssqp command-line interface."""

import json

from click.testing import CliRunner

from dfssqp.cli import main


def invoke(*args):
    return CliRunner().invoke(main, list(args))


def test_list_problems():
    result = invoke("list-problems")
    assert result.exit_code == 0
    lines = result.output.strip().splitlines()
    assert len(lines) == 8
    assert lines[0].startswith("MARATOS")


def test_solve_prints_snapshot():
    result = invoke("solve", "--problem", "maratos", "--method", "df-second",
                    "--sigma2", "0", "--iters", "2000")
    assert result.exit_code == 0
    assert "status=ok" in result.output
    assert "confidence intervals" in result.output
    assert "x[0]" in result.output


def test_solve_unknown_problem_exits_2():
    result = invoke("solve", "--problem", "nosuch")
    assert result.exit_code == 2
    assert "unknown problem" in result.output


def test_solve_unknown_method_exits_2():
    result = invoke("solve", "--problem", "maratos", "--method", "sgd")
    assert result.exit_code == 2


def test_bench_writes_artifacts(tmp_path):
    out = tmp_path / "res"
    result = invoke("bench", "--problems", "maratos", "--methods", "df-first",
                    "--sigma2", "1e-2", "--runs", "2", "--iters", "500",
                    "--out", str(out))
    assert result.exit_code == 0
    assert (out / "summary.csv").exists()
    assert (out / "runs.jsonl").exists()
    assert (out / "config.json").exists()
    assert "MARATOS" in result.output


def test_bench_bad_sigma2_exits_2(tmp_path):
    result = invoke("bench", "--problems", "maratos", "--sigma2", "abc",
                    "--out", str(tmp_path / "res"))
    assert result.exit_code == 2


def test_bench_all_failed_exits_3(tmp_path):
    result = invoke("bench", "--problems", "hs48", "--methods", "db-first",
                    "--sigma2", "0", "--runs", "1", "--iters", "1",
                    "--out", str(tmp_path / "res"))
    assert result.exit_code == 3
    assert "every run failed" in result.output


def test_bench_fast_profile(tmp_path):
    out = tmp_path / "res"
    result = invoke("bench", "--problems", "maratos", "--methods", "db-first",
                    "--sigma2", "0", "--runs", "50", "--iters", "99999",
                    "--fast", "--out", str(out))
    assert result.exit_code == 0
    echo = json.loads((out / "config.json").read_text())
    assert echo["max_iters"] == 10_000
    assert echo["runs"] == 20


def test_diagnose_bias_slope():
    result = invoke("diagnose", "--probe", "bias-slope", "--samples", "500")
    assert result.exit_code == 0
    assert "slope = 2.0000" in result.output


def test_diagnose_stabilization():
    result = invoke("diagnose", "--probe", "stabilization", "--problem",
                    "maratos", "--iters", "2000")
    assert result.exit_code == 0
    assert "stabilized in the first half" in result.output


def test_diagnose_estimator_trace():
    result = invoke("diagnose", "--probe", "estimator-trace", "--iters",
                    "1000")
    assert result.exit_code == 0
    assert "jacobian" in result.output


def test_diagnose_unknown_probe():
    result = invoke("diagnose", "--probe", "nosuch")
    assert result.exit_code == 2
