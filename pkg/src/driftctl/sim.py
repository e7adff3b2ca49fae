"""Discrete-event cluster simulator for training/inference interference.

Workers serve a Poisson request stream (inference pinned to worker 0) while
update jobs step through their epochs on whichever worker the placement
policy chose.  Interference is multiplicative and worker-local: each
actively-stepping co-resident job inflates inference service time by
kappa_infer, and training steps co-resident with inference run kappa_train
slower.  The clock is integer microseconds so traces digest identically
across runs.
"""

from __future__ import annotations

import csv
import hashlib
import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ClusterPolicy
from .errors import EmptyList, InvalidRecord, NoWorkers
from .events import canonical_json

COLOCATE_FIFO = "colocate_fifo"
DEDICATED_WORKER = "dedicated_worker"
INFERENCE_PRIORITY = "inference_priority"


@dataclass(frozen=True)
class InterferenceModel:
    """Calibrated multiplicative slowdowns for co-resident work.

    kappa_infer multiplies inference service time once per actively
    stepping co-resident training job; kappa_train multiplies training step
    time when the worker also serves inference.  Defaults reflect the
    measured magnitudes: ~3x tail latency and a 1.31-2.74x range for
    training, taking the midpoint.
    """

    kappa_infer: float = 3.0
    kappa_train: float = 2.0
    u_infer_base: float = 0.45
    u_train: float = 0.5

    def __post_init__(self):
        if self.kappa_infer < 1.0 or self.kappa_train < 1.0:
            raise InvalidRecord("interference multipliers must be >= 1")
        if not (0.0 <= self.u_infer_base <= 1.0 and 0.0 <= self.u_train <= 1.0):
            raise InvalidRecord("utilization contributions must be in [0, 1]")


@dataclass(frozen=True)
class SimJob:
    """A training job as the simulator sees it: steps and their base cost."""

    job_id: str
    arrival_ms: float
    epochs: int
    steps_per_epoch: int
    step_time_ms: float

    @property
    def total_steps(self) -> int:
        return self.epochs * self.steps_per_epoch


@dataclass
class Worker:
    worker_id: int
    inference_assigned: bool
    resident_jobs: list[str] = field(default_factory=list)


def place_job(placement: str, workers: Sequence[Worker]) -> int | None:
    """Pick a worker for a new job, or None to queue it.

    colocate_fifo / inference_priority take the emptiest worker (ties:
    lowest id).  dedicated_worker wants an idle non-inference worker and
    queues the job until one frees.
    """
    if not workers:
        raise NoWorkers("cluster has no workers")
    if placement in (COLOCATE_FIFO, INFERENCE_PRIORITY):
        return min(workers, key=lambda w: (len(w.resident_jobs), w.worker_id)).worker_id
    if placement == DEDICATED_WORKER:
        idle = [w for w in workers if not w.inference_assigned and not w.resident_jobs]
        if not idle:
            return None
        return min(idle, key=lambda w: w.worker_id).worker_id
    raise InvalidRecord(f"unknown placement {placement!r}")


def percentile(latencies: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: sorted value at 1-based index ceil(p*N)."""
    if len(latencies) == 0:
        raise EmptyList("no latencies")
    if not 0.0 < p < 1.0:
        raise InvalidRecord(f"p must be in (0, 1), got {p}")
    ordered = sorted(latencies)
    rank = math.ceil(p * len(ordered))
    return ordered[rank - 1]


@dataclass
class SimTrace:
    """Complete, deterministic record of one simulation run."""

    events: list[dict] = field(default_factory=list)
    latencies_ms: list[float] = field(default_factory=list)
    epoch_times_ms: dict[str, list[float]] = field(default_factory=dict)
    utilization: list[dict] = field(default_factory=list)
    arrivals: int = 0
    completions: int = 0

    def p95_ms(self) -> float:
        return percentile(self.latencies_ms, 0.95)

    def digest(self) -> str:
        h = hashlib.sha256()
        for event in self.events:
            h.update(canonical_json(event).encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()

    def to_csv(self, path: str | Path) -> None:
        """Merged event + utilization series: t_ms,kind,worker,latency_ms,utilization."""
        rows = []
        for e in self.events:
            rows.append((e["t_ms"], e["kind"], e.get("worker", ""),
                         e.get("latency_ms", ""), ""))
        for u in self.utilization:
            rows.append((u["t_ms"], "utilization", u["worker"], "", u["value"]))
        rows.sort(key=lambda r: (r[0], r[1]))
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_ms", "kind", "worker", "latency_ms", "utilization"])
            writer.writerows(rows)


@dataclass(frozen=True)
class Workload:
    request_rate: float
    duration_s: float
    jobs: tuple[SimJob, ...] = ()


# event kinds in scheduling order at equal timestamps is insertion order,
# enforced by a per-push sequence number in the heap entries
_REQ_DONE = "request_done"
_JOB_ARRIVAL = "job_arrival"
_STEP_DONE = "step_done"


class _JobRun:
    def __init__(self, job: SimJob):
        self.job = job
        self.worker: int | None = None
        self.steps_done = 0
        self.epoch_start_us: int = 0
        self.waiting = False  # deferred by inference_priority


def simulate(workload: Workload, policy: ClusterPolicy,
             interference: InterferenceModel, seed: int) -> SimTrace:
    """Run the cluster to completion; deterministic for a given seed.

    Inference is pinned to worker 0 for the whole run.  Requests queue FIFO
    per worker; a request's service time is fixed when service starts.
    Jobs step continuously (their interference contribution has no gaps)
    except under inference_priority, where a step defers while the request
    queue is non-empty.
    """
    if policy.workers < 1:
        raise NoWorkers("cluster has no workers")
    if workload.request_rate <= 0 or workload.duration_s <= 0:
        raise InvalidRecord("request_rate and duration must be positive")

    workers = [Worker(i, inference_assigned=(i == 0)) for i in range(policy.workers)]
    trace = SimTrace()
    rng = np.random.default_rng(seed)

    heap: list[tuple[int, int, str, tuple]] = []
    seq = 0

    def push(t_us: int, kind: str, payload: tuple) -> None:
        nonlocal seq
        heapq.heappush(heap, (t_us, seq, kind, payload))
        seq += 1

    def log(t_us: int, kind: str, **payload) -> None:
        trace.events.append({"t_ms": t_us / 1000.0, "kind": kind, **payload})

    def log_utilization(t_us: int, w: Worker, active: dict[int, int]) -> None:
        value = (interference.u_infer_base if w.inference_assigned else 0.0)
        value += interference.u_train * active[w.worker_id]
        trace.utilization.append({
            "t_ms": t_us / 1000.0, "worker": w.worker_id, "value": min(1.0, value),
        })

    # -- request stream (all on worker 0) -----------------------------------
    horizon_us = int(round(workload.duration_s * 1_000_000))
    t = 0
    arrival_times: list[int] = []
    while True:
        gap_s = rng.exponential(1.0 / workload.request_rate)
        t += max(1, int(round(gap_s * 1_000_000)))
        if t >= horizon_us:
            break
        arrival_times.append(t)

    queues: dict[int, deque] = {w.worker_id: deque() for w in workers}
    serving: dict[int, bool] = {w.worker_id: False for w in workers}
    active_steps: dict[int, int] = {w.worker_id: 0 for w in workers}
    pending_jobs: deque[_JobRun] = deque()
    runs: dict[str, _JobRun] = {}

    for at in arrival_times:
        push(at, "request_arrival", (0,))
    for job in workload.jobs:
        push(int(round(job.arrival_ms * 1000.0)), _JOB_ARRIVAL, (job.job_id,))
        runs[job.job_id] = _JobRun(job)

    def start_service(t_us: int, w: Worker) -> None:
        arrival_us = queues[w.worker_id].popleft()
        serving[w.worker_id] = True
        count = active_steps[w.worker_id]
        service_us = int(round(policy.base_service_time * 1000.0
                               * interference.kappa_infer ** count))
        push(t_us + max(1, service_us), _REQ_DONE, (w.worker_id, arrival_us))

    def step_duration_us(w: Worker, job: SimJob) -> int:
        factor = interference.kappa_train if w.inference_assigned else 1.0
        return max(1, int(round(job.step_time_ms * 1000.0 * factor)))

    def begin_stepping(t_us: int, w: Worker, run: _JobRun) -> None:
        """Start (or resume) a job's continuous stepping on its worker."""
        if policy.placement == INFERENCE_PRIORITY and w.inference_assigned \
                and len(queues[w.worker_id]) > 0:
            run.waiting = True
            return
        run.waiting = False
        active_steps[w.worker_id] += 1
        push(t_us + step_duration_us(w, run.job), _STEP_DONE, (run.job.job_id,))

    def try_place(t_us: int, run: _JobRun) -> bool:
        worker_id = place_job(policy.placement, workers)
        if worker_id is None:
            return False
        w = workers[worker_id]
        run.worker = worker_id
        run.epoch_start_us = t_us
        w.resident_jobs.append(run.job.job_id)
        log(t_us, "job_start", worker=worker_id, job_id=run.job.job_id)
        log_utilization(t_us, w, _active_for_util())
        begin_stepping(t_us, w, run)
        return True

    def _active_for_util() -> dict[int, int]:
        # utilization tracks resident jobs, deferred or not
        return {w.worker_id: len(w.resident_jobs) for w in workers}

    while heap:
        t_us, _, kind, payload = heapq.heappop(heap)

        if kind == "request_arrival":
            (worker_id,) = payload
            trace.arrivals += 1
            log(t_us, "request_arrival", worker=worker_id)
            queues[worker_id].append(t_us)
            if not serving[worker_id]:
                start_service(t_us, workers[worker_id])

        elif kind == _REQ_DONE:
            worker_id, arrival_us = payload
            trace.completions += 1
            latency_ms = (t_us - arrival_us) / 1000.0
            trace.latencies_ms.append(latency_ms)
            log(t_us, "request_done", worker=worker_id, latency_ms=latency_ms)
            w = workers[worker_id]
            if queues[worker_id]:
                start_service(t_us, w)
            else:
                serving[worker_id] = False
                # queue drained: wake any step deferred by inference_priority
                for job_id in w.resident_jobs:
                    run = runs[job_id]
                    if run.waiting:
                        begin_stepping(t_us, w, run)

        elif kind == _JOB_ARRIVAL:
            (job_id,) = payload
            run = runs[job_id]
            log(t_us, "job_queued", job_id=job_id)
            if not try_place(t_us, run):
                pending_jobs.append(run)

        elif kind == _STEP_DONE:
            (job_id,) = payload
            run = runs[job_id]
            w = workers[run.worker]
            run.steps_done += 1
            log(t_us, "job_step", worker=w.worker_id, job_id=job_id,
                step=run.steps_done)
            if run.steps_done % run.job.steps_per_epoch == 0:
                trace.epoch_times_ms.setdefault(job_id, []).append(
                    (t_us - run.epoch_start_us) / 1000.0)
                run.epoch_start_us = t_us
            if run.steps_done >= run.job.total_steps:
                active_steps[w.worker_id] -= 1
                w.resident_jobs.remove(job_id)
                log(t_us, "job_done", worker=w.worker_id, job_id=job_id)
                log_utilization(t_us, w, _active_for_util())
                # a worker freed: place anything still pending
                still_pending = len(pending_jobs)
                for _ in range(still_pending):
                    queued = pending_jobs.popleft()
                    if not try_place(t_us, queued):
                        pending_jobs.append(queued)
            else:
                # keep the interference contribution gap-free: chain the next
                # step inside this handler unless the policy defers it
                if policy.placement == INFERENCE_PRIORITY and w.inference_assigned \
                        and len(queues[w.worker_id]) > 0:
                    active_steps[w.worker_id] -= 1
                    run.waiting = True
                else:
                    push(t_us + step_duration_us(w, run.job), _STEP_DONE, (job_id,))

    return trace
