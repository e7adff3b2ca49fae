"""Command-line interface tests via click's in-process runner."""

from __future__ import annotations

import csv
import json
import re

import pytest
from click.testing import CliRunner

from driftctl.cli import main
from driftctl.data import write_dataset_csv
from driftctl import synth

CONFIG_YAML = """\
service_name: mini
model_spec:
  input_dim: 10
  num_classes: 2
  hidden_dim: 0
drift_policy:
  window_size: 100
  check_interval: 100
cl_policy:
  loss: rehearsal
  epochs: 2
  learning_rate: 0.05
validation_policy:
  min_accuracy: 0.5
  holdout_fraction: 0.4
cluster_policy:
  workers: 2
  placement: colocate_fifo
  request_rate: 100.0
  base_service_time: 5.0
"""

SUMMARY_KEYS = {"placement", "seed", "arrivals", "completions", "p95_ms",
                "mean_ms", "p50_ms", "epoch_times_ms", "digest"}


@pytest.fixture()
def runner() -> CliRunner:
    return CliRunner()


@pytest.fixture()
def config_path(tmp_path) -> str:
    path = tmp_path / "service.yaml"
    path.write_text(CONFIG_YAML)
    return str(path)


def simulate_args(config_path: str, out_dir: str, seed: int = 0,
                  placement: str | None = None) -> list[str]:
    args = ["simulate", "--config", config_path, "--out", out_dir,
            "--seed", str(seed), "--duration-s", "2", "--jobs", "1",
            "--job-epochs", "2", "--job-steps", "20", "--job-step-ms", "10"]
    if placement:
        args += ["--policy", placement]
    return args


class TestSimulateCommand:
    def test_writes_trace_and_summary(self, runner, config_path, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(main, simulate_args(config_path, str(out)))
        assert result.exit_code == 0, result.output

        with (out / "trace.csv").open(newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t_ms", "kind", "worker", "latency_ms", "utilization"]
        assert len(rows) > 10

        summary = json.loads((out / "summary.json").read_text())
        assert set(summary) == SUMMARY_KEYS
        assert summary["placement"] == "colocate_fifo"
        assert summary["arrivals"] == summary["completions"]
        assert summary["p95_ms"] > 0
        assert summary["epoch_times_ms"]["train-1"]
        assert re.search(r"trace digest ([0-9a-f]{64})", result.output).group(1) \
            == summary["digest"]

    def test_same_seed_same_digest(self, runner, config_path, tmp_path):
        digests = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            result = runner.invoke(main, simulate_args(config_path, str(out), seed=5))
            assert result.exit_code == 0, result.output
            digests.append(json.loads((out / "summary.json").read_text())["digest"])
        assert digests[0] == digests[1]

        other = tmp_path / "c"
        result = runner.invoke(main, simulate_args(config_path, str(other), seed=6))
        assert result.exit_code == 0
        assert json.loads((other / "summary.json").read_text())["digest"] != digests[0]

    def test_placement_override_changes_tail_latency(self, runner, config_path,
                                                     tmp_path):
        p95 = {}
        for placement in ("colocate_fifo", "dedicated_worker"):
            out = tmp_path / placement
            result = runner.invoke(
                main, simulate_args(config_path, str(out), seed=3,
                                    placement=placement))
            assert result.exit_code == 0, result.output
            summary = json.loads((out / "summary.json").read_text())
            assert summary["placement"] == placement
            p95[placement] = summary["p95_ms"]
        assert p95["dedicated_worker"] <= p95["colocate_fifo"]


@pytest.fixture()
def stream_path(tmp_path) -> str:
    spec = synth.StreamSpec(seed=7, change_point=300, length=700)
    x, y = synth.make_stream(spec)
    path = tmp_path / "stream.csv"
    write_dataset_csv(path, x, y)
    return str(path)


class TestRunCommand:
    def test_replays_stream_and_reports_versions(self, runner, config_path,
                                                 stream_path, tmp_path):
        events = tmp_path / "events.jsonl"
        result = runner.invoke(main, [
            "run", "--config", config_path, "--stream", stream_path,
            "--seed", "7", "--events", str(events),
        ])
        assert result.exit_code == 0, result.output
        assert "1 update job(s) finished" in result.output
        assert "deployed version: 2" in result.output
        assert "v1: archived" in result.output
        assert "v2: deployed" in result.output
        assert re.search(r"event-log digest [0-9a-f]{64}", result.output)
        assert events.exists()
        first_line = json.loads(events.read_text().splitlines()[0])
        assert first_line["kind"] == "service_started"

    def test_refuses_to_overwrite_existing_log(self, runner, config_path,
                                               stream_path, tmp_path):
        events = tmp_path / "events.jsonl"
        events.write_text("")
        result = runner.invoke(main, [
            "run", "--config", config_path, "--stream", stream_path,
            "--events", str(events),
        ])
        assert result.exit_code != 0
        assert "already exists" in result.output


class TestReportCommand:
    def test_prints_job_events_and_followups(self, runner, config_path,
                                             stream_path, tmp_path):
        events = tmp_path / "events.jsonl"
        run_result = runner.invoke(main, [
            "run", "--config", config_path, "--stream", stream_path,
            "--seed", "7", "--events", str(events),
        ])
        assert run_result.exit_code == 0, run_result.output

        result = runner.invoke(main, ["report", "--job", "job-001",
                                      "--events", str(events)])
        assert result.exit_code == 0, result.output
        entries = [json.loads(line) for line in result.output.splitlines()]
        kinds = [e["kind"] for e in entries]
        assert "job_queued" in kinds
        assert "job_finished" in kinds
        assert "version_registered" in kinds
        assert "validation" in kinds
        assert "deployed" in kinds
        assert all(e.get("job_id") == "job-001" for e in entries
                   if e["kind"].startswith("job_"))

    def test_unknown_job_fails(self, runner, config_path, stream_path, tmp_path):
        events = tmp_path / "events.jsonl"
        runner.invoke(main, ["run", "--config", config_path,
                             "--stream", stream_path, "--events", str(events)])
        result = runner.invoke(main, ["report", "--job", "job-999",
                                      "--events", str(events)])
        assert result.exit_code != 0
        assert "no events for job" in result.output
