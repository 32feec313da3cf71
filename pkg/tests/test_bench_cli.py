"""Benchmark harness reports and the click command line."""

import json

import pytest
from click.testing import CliRunner

from rnsfhe import bench
from rnsfhe.cli import main
from rnsfhe.coremath.modmath import ParameterError

CKKS_OPS = {"encode", "decode", "encrypt", "decrypt", "add", "sub", "multiply",
            "multiply_plain", "square", "relinearize", "rescale", "rotate",
            "conjugate"}
EXACT_OPS = {"encode", "decode", "encrypt", "decrypt", "add", "sub", "multiply",
             "multiply_plain", "square", "relinearize", "rotate_rows",
             "rotate_columns"}


@pytest.mark.parametrize("scheme,ops", [
    ("ckks", CKKS_OPS),
    ("bfv", EXACT_OPS),
    ("bgv", EXACT_OPS | {"mod_switch"}),
])
def test_bench_operators_report(scheme, ops):
    report = bench.bench_operators(scheme, "desk4k", reps=2)
    assert report["kind"] == "bench_operators"
    assert report["scheme"] == scheme and report["n"] == 4096
    assert {r["name"] for r in report["rows"]} == ops
    for row in report["rows"]:
        assert row["reps"] == 2
        assert row["mean_us"] > 0 and row["p95_us"] >= row["p50_us"] >= 0
    json.dumps(report)  # must stay JSON-serializable


def test_bench_operators_rejects_bad_args():
    with pytest.raises(ParameterError):
        bench.bench_operators("ckks", "desk4k", reps=0)
    with pytest.raises(ValueError):
        bench.bench_operators("des", "desk4k")


def test_ablation_ntt_report():
    report = bench.run_ablation_ntt(degrees=(16, 64), reps=2)
    assert [d["degree"] for d in report["degrees"]] == [16, 64]
    for d in report["degrees"]:
        assert d["bm"]["mean_us"] > 0 and d["mm"]["mean_us"] > 0
    json.dumps(report)


def test_ablation_mod_report():
    report = bench.run_ablation_mod(pairs=200)
    assert report["pairs"] == 200
    assert report["lookup_us_per_op"] > 0 and report["native_us_per_op"] > 0
    assert report["ratio"] > 0
    json.dumps(report)


def test_ablation_streampool_report():
    report = bench.run_ablation_streampool(profile="desk4k", reps=2)
    lanes = [r["lanes"] for r in report["lanes"]]
    assert lanes == sorted(lanes) and lanes[0] == 1
    assert report["best_speedup"] > 0
    json.dumps(report)


def test_run_ablations_dispatch():
    with pytest.raises(ParameterError):
        bench.run_ablations("cache")


def test_cli_bench(tmp_path):
    out = tmp_path / "report.json"
    result = CliRunner().invoke(main, [
        "bench", "--scheme", "bfv", "--profile", "desk4k", "--reps", "1",
        "--json", str(out),
    ])
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert report["kind"] == "bench_operators" and report["scheme"] == "bfv"
    assert json.loads(out.read_text()) == report


def test_cli_ablate_mod():
    result = CliRunner().invoke(main, ["ablate", "--which", "mod"])
    assert result.exit_code == 0, result.output
    assert json.loads(result.output)["kind"] == "ablate_mod"


def test_cli_pdq_small(tmp_path):
    out = tmp_path / "pdq.json"
    result = CliRunner().invoke(main, [
        "pdq", "--query", "1", "--rows", "16", "--digits", "2",
        "--json", str(out),
    ])
    assert result.exit_code == 0, result.output
    report = json.loads(out.read_text())
    assert report["kind"] == "run_pdq" and report["oracle_ok"]
    assert report["rows"] == 16 and report["query"] == 1
    assert report["full_task_ms"] == pytest.approx(
        report["upload_ms"] + report["first_cal_ms"])
    assert report["pool_stats"]["high_water_bytes"] > 0


def test_cli_pdq_rejects_too_many_rows():
    result = CliRunner().invoke(main, [
        "pdq", "--query", "1", "--rows", "999999", "--digits", "2",
    ])
    assert result.exit_code != 0


def test_cli_bad_choice():
    assert CliRunner().invoke(main, ["bench", "--scheme", "rsa"]).exit_code != 0
    assert CliRunner().invoke(main, ["ablate", "--which", "x"]).exit_code != 0
