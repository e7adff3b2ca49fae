"""Command-line entry points: simulate, run, report, serve."""

from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from .config import parse_config
from .data import read_dataset_csv
from .events import EventLog, canonical_json
from .gateway import create_app
from .pipeline import Pipeline, run_pipeline
from .sim import InterferenceModel, SimJob, Workload, percentile, simulate


@click.group()
def main() -> None:
    """Drift-aware continual-learning control plane."""


def _load_config(path: str):
    return parse_config(Path(path).read_text(encoding="utf-8"))


@main.command(name="simulate")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              help="Service config YAML (cluster_policy section drives the simulation).")
@click.option("--policy", "placement", default=None,
              type=click.Choice(["colocate_fifo", "dedicated_worker",
                                 "inference_priority"]),
              help="Override the configured placement policy.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Directory for trace.csv and summary.json.")
@click.option("--duration-s", default=60.0, show_default=True, type=float)
@click.option("--jobs", "n_jobs", default=1, show_default=True, type=int,
              help="Number of training jobs to inject, evenly spaced.")
@click.option("--job-epochs", default=3, show_default=True, type=int)
@click.option("--job-steps", default=100, show_default=True, type=int,
              help="Steps per epoch for each injected job.")
@click.option("--job-step-ms", default=100.0, show_default=True, type=float)
@click.option("--kappa-infer", default=3.0, show_default=True, type=float)
@click.option("--kappa-train", default=2.0, show_default=True, type=float)
def simulate_cmd(config_path: str, placement: str | None, seed: int, out_dir: str,
                 duration_s: float, n_jobs: int, job_epochs: int, job_steps: int,
                 job_step_ms: float, kappa_infer: float, kappa_train: float) -> None:
    """Run the cluster interference simulation and export its trace."""
    cfg = _load_config(config_path)
    cluster = cfg.cluster_policy
    chosen = placement or cluster.placement

    gap = duration_s * 1000.0 / (n_jobs + 1)
    jobs = tuple(
        SimJob(job_id=f"train-{i + 1}", arrival_ms=gap * (i + 1), epochs=job_epochs,
               steps_per_epoch=job_steps, step_time_ms=job_step_ms)
        for i in range(n_jobs)
    )
    workload = Workload(request_rate=cluster.request_rate, duration_s=duration_s,
                        jobs=jobs)
    policy = replace(cluster, placement=chosen)
    interference = InterferenceModel(kappa_infer=kappa_infer, kappa_train=kappa_train)
    trace = simulate(workload, policy, interference, seed)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace.to_csv(out / "trace.csv")
    p95 = trace.p95_ms() if trace.latencies_ms else None
    summary = {
        "placement": chosen,
        "seed": seed,
        "arrivals": trace.arrivals,
        "completions": trace.completions,
        "p95_ms": p95,
        "mean_ms": (sum(trace.latencies_ms) / len(trace.latencies_ms)
                    if trace.latencies_ms else None),
        "p50_ms": percentile(trace.latencies_ms, 0.5) if trace.latencies_ms else None,
        "epoch_times_ms": trace.epoch_times_ms,
        "digest": trace.digest(),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    click.echo(f"placement={chosen} arrivals={trace.arrivals} "
               f"completions={trace.completions} "
               f"p95={'n/a' if p95 is None else f'{p95:.3f}ms'}")
    click.echo(f"trace digest {trace.digest()}")
    click.echo(f"wrote {out / 'trace.csv'} and {out / 'summary.json'}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--stream", "stream_path", required=True, type=click.Path(exists=True),
              help="CSV of feature_* columns plus a label column.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--events", "events_path", default="events.jsonl", show_default=True,
              help="Event-log output path (JSON lines).")
@click.option("--registry", "registry_path", default=None,
              help="Registry log output path (defaults to in-memory).")
def run(config_path: str, stream_path: str, seed: int, events_path: str,
        registry_path: str | None) -> None:
    """Replay a labeled request stream through the full control loop."""
    cfg = _load_config(config_path)
    features, labels = read_dataset_csv(stream_path)
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    for stale in (events_path, registry_path):
        if stale and Path(stale).exists():
            raise click.ClickException(
                f"{stale} already exists; logs are append-only, pick a new path")
    pipeline = run_pipeline(cfg, x, y, seed=seed, event_path=events_path,
                            registry_path=registry_path)
    status = pipeline.status()
    jobs = pipeline.events.of_kind("job_finished")
    click.echo(f"served {len(pipeline.events.of_kind('request'))} requests, "
               f"{len(jobs)} update job(s) finished")
    for entry in pipeline.registry.history():
        click.echo(f"  v{entry['version_id']}: {entry['status']} "
                   f"(scenario={entry['scenario']}, verdict={entry['verdict']})")
    click.echo(f"deployed version: {status['deployed_version']}  "
               f"accuracy: {status['current_accuracy']}")
    click.echo(f"event-log digest {pipeline.events.digest()}")


@main.command()
@click.option("--job", "job_id", required=True, help="Job id, e.g. job-001.")
@click.option("--events", "events_path", default="events.jsonl", show_default=True,
              type=click.Path(exists=True))
def report(job_id: str, events_path: str) -> None:
    """Print everything the event log knows about one update job."""
    log = EventLog(events_path)
    matched = [e for e in log if e.get("job_id") == job_id]
    if not matched:
        raise click.ClickException(f"no events for job '{job_id}' in {events_path}")
    for entry in matched:
        click.echo(canonical_json(entry))
    # the registration/validation/deploy records at the same timestamp as
    # job_finished belong to this job's candidate
    finish_times = {e["t_ms"] for e in matched if e["kind"] == "job_finished"}
    followups = ("version_registered", "validation", "deployed", "rejected",
                 "awaiting_manual")
    for entry in log:
        if entry["kind"] in followups and entry["t_ms"] in finish_times:
            click.echo(canonical_json(entry))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--bootstrap", "bootstrap_path", default=None, type=click.Path(exists=True),
              help="CSV used to train and deploy version 1 before serving.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--events", "events_path", default=None)
@click.option("--static-dir", default=None, type=click.Path(file_okay=False),
              help="Dashboard build directory served under /ui.")
def serve(config_path: str, bootstrap_path: str | None, seed: int, host: str,
          port: int, events_path: str | None, static_dir: str | None) -> None:
    """Start the HTTP gateway over one bootstrapped service."""
    import uvicorn

    cfg = _load_config(config_path)
    pipeline = Pipeline(cfg, seed=seed, event_path=events_path)
    if bootstrap_path is not None:
        features, labels = read_dataset_csv(bootstrap_path)
        pipeline.bootstrap(np.asarray(features), np.asarray(labels))
    else:
        from .synth import make_blobs
        spec_classes = list(range(cfg.model_spec.num_classes))
        x, y = make_blobs(seed, spec_classes, 200, dim=cfg.model_spec.input_dim)
        pipeline.bootstrap(x, y)
        click.echo("no --bootstrap given; trained v1 on synthetic class blobs")
    app = create_app(pipeline, static_dir=static_dir)
    click.echo(f"serving '{cfg.service_name}' on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    sys.exit(main())
