import json

import pandas as pd
import pytest
from typer.testing import CliRunner

from ridectl import __version__
from ridectl.cli import app
from ridectl.config import settings

runner = CliRunner()
HORIZON = "2016-04-04T08:00:00..2016-04-04T09:00:00"


def invoke(*args: str):
    return runner.invoke(app, [str(a) for a in args])


@pytest.fixture
def workspace(tmp_path):
    """Synthetic trips plus a calibrated model for two adjacent regions."""
    trips = tmp_path / "trips.csv"
    model = tmp_path / "model.json"
    result = invoke("synth", "-r", "2", "--hours", "1", "--rate", "1.0,0.6", "--mixing", "0.3", "--seed", "3", "-o", trips)
    assert result.exit_code == 0, result.output
    result = invoke(
        "calibrate", trips, "-r", "2", "--horizon", HORIZON, "--adjacency", "1-2", "--pba", "0.2", "-o", model
    )
    assert result.exit_code == 0, result.output
    return tmp_path, trips, model


def test_version():
    result = invoke("--version")
    assert result.exit_code == 0
    assert f"ridectl {__version__}" in result.output


class TestPipeline:
    def test_calibrate_writes_model_and_manifest(self, workspace):
        root, trips, model = workspace
        document = json.loads(model.read_text())
        assert document["regions"] == 2
        assert document["adjacency"] == [[1, 2], [2, 1]]
        assert len(document["windows"]) == 6
        manifest = json.loads((root / "model.manifest.json").read_text())
        assert manifest["command"] == "calibrate"
        assert str(trips) in manifest["inputs"]

    def test_targets(self, workspace):
        root, _, model = workspace
        result = invoke("targets", model, "--delta", "0.05", "-o", root / "targets.csv")
        assert result.exit_code == 0, result.output
        frame = pd.read_csv(root / "targets.csv")
        assert list(frame.columns) == [
            "region",
            "window",
            "window_start",
            "window_end",
            "rate",
            "target",
            "reserved_peak",
            "bound",
        ]
        assert len(frame) == 6
        assert (frame["target"] >= 0).all()
        assert (frame.loc[frame["target"] > 0, "bound"] <= 0.05).all()

    def test_float_precision_setting(self, workspace, monkeypatch):
        root, _, model = workspace
        monkeypatch.setattr(settings, "float_precision", 2)
        assert invoke("targets", model, "-o", root / "short.csv").exit_code == 0
        first_row = (root / "short.csv").read_text().splitlines()[1].split(",")
        # window_start, window_end, rate
        assert all(len(value.split(".")[1]) == 2 for value in first_row[2:5])

    def test_targets_are_byte_identical_across_runs(self, workspace):
        root, _, model = workspace
        for name in ("a.csv", "b.csv"):
            assert invoke("targets", model, "-o", root / name).exit_code == 0
        assert (root / "a.csv").read_bytes() == (root / "b.csv").read_bytes()

    def test_simulate_single_run(self, workspace):
        root, trips, model = workspace
        result = invoke("simulate", model, trips, "--pba", "0.2", "--seed", "1", "-o", root / "sim")
        assert result.exit_code == 0, result.output
        metrics = pd.read_csv(root / "sim" / "metrics.csv")
        assert len(metrics) == 6
        summary = json.loads((root / "sim" / "summary.json").read_text())
        assert summary["config"]["p_ba"] == 0.2
        manifest = json.loads((root / "sim" / "manifest.json").read_text())
        assert str(root / "sim" / "metrics.csv") in manifest["outputs"]

    def test_simulate_is_reproducible(self, workspace):
        root, trips, model = workspace
        for name in ("one", "two"):
            assert invoke("simulate", model, trips, "--pba", "0.3", "-o", root / name).exit_code == 0
        assert (root / "one" / "metrics.csv").read_bytes() == (root / "two" / "metrics.csv").read_bytes()

    def test_simulate_sweep(self, workspace):
        root, trips, model = workspace
        result = invoke("simulate", model, trips, "--sweep", "0,0.5", "-n", "2", "-o", root / "sweep")
        assert result.exit_code == 0, result.output
        table = pd.read_csv(root / "sweep" / "sweep.csv")
        assert table["p_ba"].tolist() == [0.0, 0.5]
        assert table["replications"].tolist() == [2, 2]

    def test_simulate_with_config_file(self, workspace):
        root, trips, model = workspace
        config = root / "run.yaml"
        config.write_text("delta: 0.1\nrebalance_points: [0.0]\n")
        result = invoke("simulate", model, trips, "--config", config, "--no-compliance", "-o", root / "cfg")
        assert result.exit_code == 0, result.output
        summary = json.loads((root / "cfg" / "summary.json").read_text())
        assert summary["config"]["delta"] == 0.1
        assert summary["config"]["compliance"] is False
        assert summary["total_internal"] == 0

    def test_verify(self, workspace):
        root, trips, model = workspace
        result = invoke("verify", model, trips, "-o", root / "verify.csv")
        assert result.exit_code == 0, result.output
        frame = pd.read_csv(root / "verify.csv")
        # 20 one-minute points per window, 3 windows, 2 regions
        assert len(frame) == 120
        assert (frame["predicted_std"] >= 0).all()


class TestErrors:
    def test_delta_out_of_range(self, workspace):
        _, _, model = workspace
        result = invoke("targets", model, "--delta", "1.5")
        assert result.exit_code == 1
        assert "delta must lie in (0, 1)" in result.output

    def test_missing_trip_file(self, tmp_path):
        result = invoke("calibrate", tmp_path / "nope.csv", "-r", "1", "--horizon", HORIZON)
        assert result.exit_code == 1
        assert "trip file not found" in result.output

    def test_bad_horizon(self, tmp_path, fixtures_dir):
        result = invoke("calibrate", fixtures_dir / "trips_small.csv", "-r", "2", "--horizon", "tomorrow")
        assert result.exit_code == 1
        assert "START..END" in result.output

    def test_row_with_extra_fields(self, tmp_path):
        trips = tmp_path / "trips.csv"
        trips.write_text(
            "request_time,completion_time,origin_region,destination_region\n"
            "2016-04-04T08:05:00,2016-04-04T08:15:00,1,1\n"
            "2016-04-04T08:06:00,2016-04-04T08:16:00,1,1,9\n"
        )
        lenient = invoke("calibrate", trips, "-r", "1", "--horizon", HORIZON, "-o", tmp_path / "model.json")
        assert lenient.exit_code == 0, lenient.output
        strict = invoke("calibrate", trips, "-r", "1", "--horizon", HORIZON, "--strict")
        assert strict.exit_code == 1
        assert "expected 4 fields, found 5" in strict.output

    def test_sweep_on_missing_model(self, tmp_path, fixtures_dir):
        result = invoke("simulate", tmp_path / "model.json", fixtures_dir / "trips_small.csv", "--sweep", "0,0.5")
        assert result.exit_code == 1
        assert "model file not found" in result.output


class TestRebalanceCommand:
    def test_plan(self, tmp_path, fixtures_dir):
        out = tmp_path / "plan.json"
        result = invoke("rebalance", fixtures_dir / "instance_chain.txt", "-o", out)
        assert result.exit_code == 0, result.output
        plan = json.loads(out.read_text())
        assert plan["moves"] == [{"from": 1, "to": 2, "drivers": 2}, {"from": 2, "to": 3, "drivers": 2}]
        assert plan["total_external"] == 0
        assert [r["idle_after"] for r in plan["regions"]] == [2, 3, 2]

    def test_internal_only(self, tmp_path):
        instance = tmp_path / "instance.txt"
        instance.write_text("region 1 3 4 5\nregion 2 2 0 5\nadjacent 1 2\n")
        result = invoke("rebalance", instance, "--internal-only", "-o", tmp_path / "plan.json")
        assert result.exit_code == 0, result.output
        plan = json.loads((tmp_path / "plan.json").read_text())
        assert plan["shortfall"] == {"2": 1}
        assert plan["add"] == {}

    def test_asymmetric_adjacency_is_a_validation_error(self, tmp_path):
        instance = tmp_path / "instance.txt"
        instance.write_text("region 1 0 2 0\nregion 2 0 0 2\narc 1 2\n")
        result = invoke("rebalance", instance)
        assert result.exit_code == 1
        assert "not symmetric" in result.output

    def test_infeasible_is_a_runtime_error(self, tmp_path):
        instance = tmp_path / "instance.txt"
        instance.write_text("region 1 3 4 5\nregion 2 3 0 5\nbalance SO 7\n")
        result = invoke("rebalance", instance)
        assert result.exit_code == 2
        assert "balances sum to" in result.output

    def test_default_output_goes_to_output_dir(self, tmp_path, fixtures_dir):
        assert invoke("rebalance", fixtures_dir / "instance_chain.txt").exit_code == 0
        assert (tmp_path / "plan.json").is_file()
