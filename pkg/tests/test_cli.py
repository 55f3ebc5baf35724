import json

import pandas as pd
import pytest

from src.cli import EXIT_INPUT, EXIT_OK, EXIT_VIOLATION, main
from src.data_loader import read_json, write_json
from src.resources import PoolConfig


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A tiny pool config, a generated dataflow pool and workload, and one finished run."""
    root = tmp_path_factory.mktemp("cli")
    pool_config = write_json(PoolConfig(edge_count=6, cloud_count=2).to_dict(), root / "tiny_pool.json")
    common = ["--pool-config", str(pool_config), "--seed", "4"]
    assert main(["gen-pool", *common, "--count", "3", "-o", str(root / "pool.json")]) == EXIT_OK
    assert main(["gen-workload", *common, "--pool", str(root / "pool.json"), "--horizon", "15", "-o", str(root / "workload.json")]) == EXIT_OK
    run = [
        "run",
        *common,
        "--pool",
        str(root / "pool.json"),
        "--workload",
        str(root / "workload.json"),
        "--strategy",
        "topset",
        "--rebalance",
        "vertex+edge",
        "--out",
        str(root / "runs"),
    ]
    assert main(run) == EXIT_OK
    return root


def test_generated_files(workspace):
    pool = read_json(workspace / "pool.json")
    assert len(pool["dataflows"]) == 3
    assert pool["provenance"]["seed"] == 4
    workload = read_json(workspace / "workload.json")
    assert len(workload["activities"]) == 15
    sizing = workload["provenance"]["pool_config"]
    assert (sizing["edge_count"], sizing["cloud_count"]) == (6, 2)


def test_run_writes_trace(workspace):
    trace = workspace / "runs" / "topset_vertex-edge.json"
    payload = read_json(trace)
    assert payload["provenance"]["strategy"] == "topset"
    assert payload["provenance"]["rebalance"] == "vertex+edge"
    assert payload["provenance"]["seed"] == 4
    frame = pd.read_csv(workspace / "runs" / "topset_vertex-edge.csv", comment="#")
    assert len(frame) == 15


def test_validate_clean_trace(workspace, capsys):
    assert main(["validate", str(workspace / "runs" / "topset_vertex-edge.json")]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["c1_ok"] and report["c2_ok"] and report["c3_ok"]


def test_validate_tampered_trace(workspace, tmp_path, capsys):
    payload = read_json(workspace / "runs" / "topset_vertex-edge.json")
    # the base load alone now drains more than the battery holds
    payload["config"]["pool"]["battery_capacity_mah"] = 100.0
    tampered = write_json(payload, tmp_path / "tampered.json")
    assert main(["validate", str(tampered)]) == EXIT_VIOLATION
    assert not json.loads(capsys.readouterr().out)["c3_ok"]


def test_compare_with_itself(workspace, tmp_path, capsys):
    trace = str(workspace / "runs" / "topset_vertex-edge.json")
    out = tmp_path / "compare.csv"
    assert main(["compare", trace, trace, "-o", str(out)]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["intervals"] == 15
    assert summary["mean_relative_improvement"] == 0.0
    frame = pd.read_csv(out, comment="#")
    assert (frame["delta_s"] == 0).all()


def test_compare_seed_mismatch(workspace, tmp_path):
    trace = str(workspace / "runs" / "topset_vertex-edge.json")
    assert main(["compare", trace, trace, "--seed", "5", "-o", str(tmp_path / "c.csv")]) == EXIT_INPUT


def test_missing_file(tmp_path):
    assert main(["validate", str(tmp_path / "nope.json")]) == EXIT_INPUT


def test_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("[1, 2", encoding="utf-8")
    assert main(["validate", str(path)]) == EXIT_INPUT


def test_trace_without_pool_config(tmp_path):
    path = write_json({"config": {}, "provenance": {"seed": 1}, "records": []}, tmp_path / "bare.json")
    assert main(["validate", str(path)]) == EXIT_INPUT


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        main(["teleport"])
