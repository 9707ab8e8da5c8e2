import json

import numpy as np
import polars as pl
import yaml
from numpy.testing import assert_array_equal
from polars.testing import assert_frame_equal

from Modnet.filewriter import savecheckpoint, saveconfig, savegrid, savejson, savemetrics
from Modnet.problems import Burgers1D, NetworkSpec
from Modnet.readfiles import readcheckpoint, readgrid
from Modnet.reference import GridSolution
from Modnet.report import generate_report, getparameters
from Modnet.training import AdamState, adam_step

problem = Burgers1D(green=NetworkSpec((5,), "sigmoid"), outer=NetworkSpec((4,), "sigmoid"))


def test_checkpoint_restores_networks_and_optimizer(tmp_path):
    op = problem.build_operator(seed=3)
    params = op.slots()
    _, adam = adam_step(params, {name: np.ones_like(v) / 3.0 for name, v in params.items()}, AdamState())
    path = savecheckpoint(op, adam, 12, str(tmp_path / "run" / "checkpoint.json"), {"interior": [4, 4]})
    record = readcheckpoint(path)
    assert record["family"] == "burgers1d"
    assert record["epoch"] == 12
    assert record["quadrature"] == {"interior": [4, 4]}
    assert sorted(record["networks"]) == ["F", "GL", "GR"]
    for name, net in op.networks().items():
        for (w1, b1), (w2, b2) in zip(net.parameters(), record["networks"][name].parameters()):
            assert_array_equal(w1, w2)
            assert_array_equal(b1, b2)
    assert record["adam"].step == 1
    for name in params:
        assert_array_equal(record["adam"].m[name], adam.m[name])
        assert_array_equal(record["adam"].v[name], adam.v[name])


def test_json_values_are_plain(tmp_path):
    path = savejson({"a": np.float64(0.1), "b": np.arange(3), "c": float("nan"), 4: (1, 2)}, str(tmp_path / "x.json"))
    with open(path) as handle:
        assert json.load(handle) == {"a": 0.1, "b": [0, 1, 2], "c": None, "4": [1, 2]}


def test_metrics_record(tmp_path):
    variants = {"default": {"epochs_run": 3, "best_loss": 0.5, "tests": [{"value": 15.0, "rmse": 0.1}]}}
    path = savemetrics("smoke", "poisson2d", 0, variants, str(tmp_path / "metrics.json"))
    with open(path) as handle:
        record = json.load(handle)
    assert record["schema_version"] == 1
    assert record["variants"] == variants
    assert (record["name"], record["problem"], record["seed"]) == ("smoke", "poisson2d", 0)


def test_config_snapshot_reads_back(tmp_path):
    raw = {"name": "smoke", "family": {"grid": (10.0, 20.0), "k": 2}, "labels": None}
    path = saveconfig(raw, str(tmp_path / "config.yaml"))
    with open(path) as handle:
        assert yaml.safe_load(handle) == {"name": "smoke", "family": {"grid": [10.0, 20.0], "k": 2}, "labels": None}


def test_grid_file_reads_back(tmp_path):
    grid = GridSolution({"x": np.linspace(0, 1, 3), "v": np.array([-0.5, 0.5])}, np.arange(6.0).reshape(3, 2))
    path = savegrid(grid.to_frame(), str(tmp_path / "grid.csv"))
    assert_frame_equal(pl.read_csv(path), grid.to_frame())
    assert_array_equal(readgrid(path, ("x", "v")).values, grid.values)


def test_report_lists_variants_and_files(tmp_path):
    variants = {
        "combined": {
            "epochs_run": 7,
            "best_loss": 0.25,
            "tests": [{"parameter": "scale", "value": 1.0, "rmse": 0.125, "relative_error": None, "max_error": 0.5}],
        }
    }
    path = generate_report("example3", "auxiliary2d", {"seed": 0}, variants, ["combined/solution_scale_1.csv"],
                           str(tmp_path / "report.md"))
    with open(path) as handle:
        report = handle.read()
    assert report.startswith("# example3")
    assert "## Variant `combined`" in report
    assert "| scale | 1.0 | 1.2500e-01 | n/a | 5.0000e-01 |" in report
    assert "- `combined/solution_scale_1.csv`" in report
    assert "- **seed**: 0" in report


def test_getparameters():
    assert getparameters({"seed": 7, "out_dir": None, "config": "c.yaml"}) == {"seed": 7, "config": "c.yaml"}
