import json
import logging
import subprocess
import sys
from pathlib import Path

import pytest

from adaptagg.cli import build_parser, main
from adaptagg.timeseries import load_csv, write_csv

from conftest import weekly_toy

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "four_weeks.csv"
    write_csv(weekly_toy(4), path)
    return path


def run(*argv):
    return main([str(a) for a in argv])


def common(data_csv, out, *extra):
    return ["--data", data_csv, "--catalog", CONFIGS / "linear.json", "--out", out, *extra]


def test_synth_is_reproducible(tmp_path):
    assert run("synth", "--years", "0.1", "--seed", "3", "--out", tmp_path / "a") == 0
    assert run("synth", "--years", "0.1", "--seed", "3", "--out", tmp_path / "b") == 0
    for name in ("data.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert load_csv(tmp_path / "a" / "data.csv").hours == 876


def test_synth_rejects_empty_horizon(tmp_path, capsys):
    assert run("synth", "--years", "0", "--out", tmp_path) == 2
    assert "years" in capsys.readouterr().err


def test_benchmark_rerun_hits_cache(tmp_path, data_csv, caplog):
    caplog.set_level(logging.INFO, logger="adaptagg")
    assert run("benchmark", *common(data_csv, tmp_path)) == 0
    first = (tmp_path / "benchmark.json").read_bytes()
    assert "served from cache" not in caplog.text
    assert run("benchmark", *common(data_csv, tmp_path)) == 0
    assert "served from cache" in caplog.text
    assert (tmp_path / "benchmark.json").read_bytes() == first
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert set(manifest["inputs"]) == {"data", "catalog"}
    assert "benchmark.json" in manifest["outputs"]


def test_linear_variant_with_thermal_catalog_is_config_error(tmp_path, data_csv, capsys):
    argv = ["--data", data_csv, "--catalog", CONFIGS / "base.json", "--variant", "linear", "--out", tmp_path]
    assert run("benchmark", *argv) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_bad_rps_and_missing_paths(tmp_path, data_csv):
    assert run("benchmark", *common(data_csv, tmp_path, "--rps", "1.5")) == 2
    assert run("benchmark", "--data", tmp_path / "nope.csv", "--out", tmp_path) == 2
    assert run("benchmark", "--config", tmp_path / "nope.json", "--out", tmp_path) == 2


def test_aggregate_single_cluster(tmp_path, data_csv):
    assert run("aggregate", *common(data_csv, tmp_path, "--k", "1")) == 0
    agg = json.loads((tmp_path / "aggregation.json").read_text())
    assert agg["weights"] == [4]
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["status"] == "ok"
    assert "timings" not in report


def test_aggregate_is_byte_identical(tmp_path, data_csv):
    for name in ("a", "b"):
        assert run("aggregate", *common(data_csv, tmp_path / name, "--k", "2", "--method", "kmeans")) == 0
    for name in ("aggregation.json", "report.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_aggregate_without_evaluation(tmp_path, data_csv):
    assert run("aggregate", *common(data_csv, tmp_path, "--k", "2", "--no-eval", "--mode", "traditional")) == 0
    assert (tmp_path / "aggregation.json").exists()
    assert not (tmp_path / "report.json").exists()


def test_config_file_with_flag_override(tmp_path, data_csv):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"data": str(data_csv), "catalog": str(CONFIGS / "linear.json"),
                               "cluster": {"k": 3}, "out": str(tmp_path / "out")}))
    assert run("aggregate", "--config", cfg, "--k", "2", "--no-eval") == 0
    agg = json.loads((tmp_path / "out" / "aggregation.json").read_text())
    assert len(agg["weights"]) == 2
    cfg.write_text(json.dumps({"alpha": 1, "out": "x"}))
    assert run("aggregate", "--config", cfg) == 2


def test_sweep_resume_gives_same_table(tmp_path, data_csv, caplog):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"k": [1, 2], "variant": ["linear"]}))
    out = tmp_path / "sweep"
    assert run("sweep", *common(data_csv, out, "--grid", grid)) == 0
    table = (out / "sweep.csv").read_bytes()
    cells = sorted((out / "cells").iterdir())
    assert len(cells) == 2
    cells[1].unlink()
    caplog.set_level(logging.INFO, logger="adaptagg")
    assert run("sweep", *common(data_csv, out, "--grid", grid)) == 0
    assert "1 of 2 cells already complete" in caplog.text
    assert (out / "sweep.csv").read_bytes() == table
    weights = (out / "weights.csv").read_text().splitlines()
    assert weights[0].split(",")[-1] == "weight"


def test_sweep_partial_failure_exit_code(tmp_path, data_csv):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"k": [2, 9], "variant": ["linear"]}))
    assert run("sweep", *common(data_csv, tmp_path / "out", "--grid", grid)) == 5
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert len(manifest["failed"]) == 1 and len(manifest["cells"]) == 2


def test_help_lists_flags(capsys):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args(["aggregate", "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for flag in ("--method", "--linkage", "--k", "--centroid", "--standardize", "--rps", "--jobs",
                 "--slice-hours", "--seed", "--out", "--config"):
        assert flag in text


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args(["aggregate", "--alpha", "3"])
    assert exc.value.code == 2
    assert "unrecognized arguments" in capsys.readouterr().err


def test_console_script_runs(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "adaptagg.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("adaptagg ")
