"""The closed serving loop: collect, detect, retrain, validate, deploy.

Pipeline owns one service end to end.  Requests flow through the deployed
model into the cache and the drift monitor; a triggered window starts an
update job whose candidate must pass the validation gate before deployment.
Every stage appends to the event log, which is the replayable source of
truth: status answers are recomputable from the log alone, and a fixed seed
reproduces the log digest bit-for-bit.

Timestamps are logical milliseconds (one per served request), never wall
clock, so two runs with the same seed write identical logs.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import CLPolicy, ServiceConfig, apply_policy_patch, serialize_config
from .data import (
    ClCache,
    DataManifest,
    LabelQueue,
    RequestRecord,
    ids_digest,
    sample_rehearsal,
)
from .drift import DriftMonitor, DriftReport
from .errors import EmptyHoldout, NotEnqueued, NotValidated
from .evaluator import (
    ACCEPTED,
    REJECTED,
    MetricReport,
    TaskSet,
    ValidationVerdict,
    carve_holdout,
    profile,
    validate,
)
from .events import EventLog
from .learner import (
    Model,
    OFFLINE,
    ParamLayout,
    UpdateJob,
    fit,
    predict,
    run_update,
    select_scenario,
)
from .registry import ModelCard, ModelRegistry

DEFAULT_LABEL_THRESHOLD = 0.6


def _empty_manifest(note_count: int) -> DataManifest:
    """Placeholder manifest for bootstrap training, which predates the cache."""
    return DataManifest(
        manifest_id=f"m-{ids_digest(())[:12]}",
        time_range=(0, 0),
        class_filter=(),
        record_ids=(),
        seed=0,
        new_count=note_count,
        rehearsal_count=0,
        shortfall=0,
        content_digest=ids_digest(()),
    )


class Pipeline:
    """Single-service control loop over cache, monitor, learner and registry."""

    def __init__(
        self,
        config: ServiceConfig,
        seed: int = 0,
        event_path: str | Path | None = None,
        registry_path: str | Path | None = None,
        archive_path: str | Path | None = None,
        cache_capacity: int = 10_000,
        label_threshold: float = DEFAULT_LABEL_THRESHOLD,
    ):
        self.config = config
        self.seed = seed
        self.cache = ClCache(config.model_spec.input_dim, capacity=cache_capacity,
                             archive_path=archive_path)
        self.label_queue = LabelQueue(self.cache)
        self.registry = ModelRegistry(config.model_spec.input_dim, path=registry_path)
        self.events = EventLog(event_path)
        self.monitor = DriftMonitor(config.drift_policy)
        self.model: Model | None = None
        self.label_threshold = label_threshold
        self._t = 0
        self._job_counter = 0
        self._bootstrap_steps = 1
        self._rolling: deque[bool] = deque(maxlen=config.drift_policy.window_size)
        self._last_report: DriftReport | None = None
        self._awaiting_manual: int | None = None
        # path-integral accumulator for the DEPLOYED lineage; candidates get a
        # copy and we only adopt theirs if they win the gate
        self._si_state = None
        self._pending_si_state = None

    # -- lifecycle -----------------------------------------------------------

    def bootstrap(self, x: np.ndarray, y: np.ndarray, test_fraction: float = 0.2):
        """Train and deploy version 1 offline, before any traffic."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        num_classes = max(int(y.max()) + 1, self.config.model_spec.num_classes)
        layout = ParamLayout(self.config.model_spec.input_dim,
                             self.config.model_spec.hidden_dim, num_classes)
        model = Model.seeded_init(layout, self.seed)

        split = max(1, int(round(len(x) * (1.0 - test_fraction))))
        boot_cfg = replace_loss_free(self.config.cl_policy)
        model, _, steps, _ = fit(model, x[:split], y[:split], boot_cfg, self.seed)
        self._bootstrap_steps = max(1, steps)

        task = TaskSet("bootstrap", x[:split], y[:split], x[split:], y[split:])
        benchmark = profile([model], [task], steps_per_task=[self._bootstrap_steps])
        verdict = ValidationVerdict(
            decision=ACCEPTED,
            holdout_acc_new=benchmark.final_acc,
            holdout_acc_old=benchmark.final_acc,
            ab=None,
            reasons=("bootstrap: initial offline training",),
        )
        card = ModelCard(
            loss_config=self._loss_config_dict(),
            scenario=OFFLINE,
            benchmark=benchmark.to_dict(),
            data_manifest=_empty_manifest(split).to_dict(),
            validation=verdict.to_dict(),
        )
        config_digest = hashlib.sha256(
            serialize_config(self.config).encode("utf-8")).hexdigest()
        self.events.append("service_started", 0,
                           service=self.config.service_name,
                           window_size=self.config.drift_policy.window_size,
                           check_interval=self.config.drift_policy.check_interval,
                           config_digest=config_digest)
        version = self.registry.register_version(
            [float(p) for p in model.params], layout.to_dict(), card, created_at=0)
        self.events.append("version_registered", 0, version_id=version.version_id,
                           scenario=OFFLINE, verdict=ACCEPTED)
        self.registry.deploy(version.version_id, actor="bootstrap", created_at=0)
        self.events.append("deployed", 0, version_id=version.version_id,
                           num_classes=num_classes, actor="bootstrap",
                           manual_override=False)
        self.model = model
        self.monitor.known_classes = model.known_classes
        return version

    def _loss_config_dict(self) -> dict:
        cl = self.config.cl_policy
        return {
            "loss": cl.loss,
            "lambda": cl.ewc_lambda,
            "si_c": cl.si_c,
            "si_xi": cl.si_xi,
            "rehearsal_ratio": cl.rehearsal_ratio,
            "epochs": cl.epochs,
            "learning_rate": cl.learning_rate,
            "batch_size": cl.batch_size,
        }

    # -- serving -------------------------------------------------------------

    def serve(self, features: Sequence[float], label: int | None = None) -> RequestRecord:
        """Serve one request and advance the whole loop by one tick."""
        if self.model is None:
            raise NotValidated("no deployed model; bootstrap the service first")
        t = self._t
        prediction, confidence = predict(self.model, features)
        record = RequestRecord(
            record_id=self.cache.next_record_id(),
            arrival=t,
            features=tuple(float(v) for v in features),
            prediction=prediction,
            confidence=confidence,
            label=int(label) if label is not None else None,
            label_source="online" if label is not None else "none",
        )
        self.cache.collect(record)
        correct = (prediction == record.label) if record.label is not None else None
        if correct is not None:
            self._rolling.append(correct)
        self.events.append("request", t, record_id=record.record_id,
                           prediction=prediction, confidence=confidence,
                           label=record.label, correct=correct)
        if record.label is None and confidence < self.label_threshold:
            self.label_queue.enqueue_label(record.record_id)
            self.events.append("label_enqueued", t, record_id=record.record_id,
                               confidence=confidence)

        report = self.monitor.observe(record)
        self._t += 1
        window = self.config.drift_policy.window_size
        if not self.monitor.reference and len(self.monitor.window) >= window:
            # first full window after start/deploy becomes the comparison
            # baseline: fresh traffic scored by the current model, so the
            # reference and future windows share any serving-time skew
            reference = tuple(self.monitor.window)
            self.monitor.set_reference(reference)
            self.events.append("reference_set", t,
                               first_id=reference[0].record_id,
                               last_id=reference[-1].record_id)
        if report is not None:
            self._last_report = report
            self.events.append("drift_report", t, **report.to_dict())
            if report.triggered:
                self._handle_trigger(report, t)
        return record

    def provide_label(self, record_id: int, label: int) -> RequestRecord:
        try:
            record = self.label_queue.provide_label(record_id, int(label))
        except NotEnqueued:
            # not awaiting annotation, but direct labeling of any still-unlabeled
            # record is allowed (raises if unknown or already labeled)
            record = self.cache.attach_label(record_id, int(label), "annotator")
        self.events.append("label", self._t, record_id=record_id, label=int(label),
                           source="annotator")
        return record

    # -- the update path -------------------------------------------------------

    def _handle_trigger(self, report: DriftReport, t: int) -> None:
        if self._awaiting_manual is not None:
            self.events.append("trigger_suppressed", t, window_id=report.window_id,
                               awaiting_version=self._awaiting_manual)
            return

        scenario = select_scenario(report, self.config.cl_policy)
        window_records = [self.cache.get(r.record_id) for r in self.monitor.window]
        window_ids = {r.record_id for r in window_records}
        history = [r for r in self.cache.labeled_records()
                   if r.record_id not in window_ids]
        try:
            holdout, _ = carve_holdout(
                window_records, history, self.config.validation_policy.holdout_fraction)
        except EmptyHoldout:
            self.events.append("trigger_skipped", t, window_id=report.window_id,
                               reason="no labeled records in window")
            return
        holdout_ids = {r.record_id for r in holdout}
        new_batch = [r for r in window_records
                     if r.label is not None and r.record_id not in holdout_ids]
        if not new_batch:
            self.events.append("trigger_skipped", t, window_id=report.window_id,
                               reason="no labeled training records")
            return

        cl = self.config.cl_policy
        ratio = cl.rehearsal_ratio if (cl.rehearsal_enabled or cl.ewc_enabled) else 0.0
        job_seed = self.seed + 7919 * (self._job_counter + 1)
        training, manifest = sample_rehearsal(self.cache, new_batch, ratio, job_seed,
                                              exclude_ids=holdout_ids)
        self._job_counter += 1
        job = UpdateJob(
            job_id=f"job-{self._job_counter:03d}",
            scenario=scenario,
            manifest=manifest,
            loss_config=cl,
            base_version=self.registry.deployed_id,
            resource_demand={"slots": 1,
                             "compute_cost": float(cl.epochs * len(training))},
        )
        self.events.append("job_queued", t, **job.to_dict())

        base_model = self._model_of(self.registry.deployed_id)
        try:
            candidate, train_report = run_update(job, base_model, training, cl, job_seed,
                                                 si_state=self._si_state)
        except Exception as exc:  # noqa: BLE001 - job failures must be logged
            self.events.append("job_failed", t, job_id=job.job_id, error=str(exc))
            return
        self.events.append("job_finished", t, **train_report.to_dict())

        verdict = validate(candidate, base_model, holdout,
                           self.config.validation_policy, job_seed, manifest=manifest)
        benchmark = self._card_benchmark(base_model, candidate, holdout, window_ids,
                                         train_report.steps)
        card = ModelCard(
            loss_config=self._loss_config_dict(),
            scenario=scenario,
            benchmark=benchmark.to_dict(),
            data_manifest=manifest.to_dict(),
            validation=verdict.to_dict(),
        )
        version = self.registry.register_version(
            [float(p) for p in candidate.params], candidate.layout.to_dict(), card,
            created_at=t)
        self.events.append("version_registered", t, version_id=version.version_id,
                           scenario=scenario, verdict=verdict.decision)
        self.events.append("validation", t, version_id=version.version_id,
                           **verdict.to_dict())

        if verdict.decision == ACCEPTED:
            self._si_state = train_report.si_state
            self._deploy(version.version_id, actor="pipeline", manual_override=False,
                         t=t, model=candidate)
        elif verdict.decision == REJECTED:
            self.registry.reject(version.version_id, actor="validator", created_at=t)
            self.events.append("rejected", t, version_id=version.version_id,
                               actor="validator")
        else:
            self._awaiting_manual = version.version_id
            self._pending_si_state = train_report.si_state
            self.events.append("awaiting_manual", t, version_id=version.version_id)

    def _card_benchmark(self, base: Model, candidate: Model,
                        holdout: Sequence[RequestRecord], window_ids: set[int],
                        update_steps: int) -> MetricReport:
        """Pairwise profile: retained (pre-drift) slice vs update (window) slice."""
        old_part = [r for r in holdout if r.record_id not in window_ids]
        new_part = [r for r in holdout if r.record_id in window_ids]

        def as_task(name: str, records: Sequence[RequestRecord]) -> TaskSet:
            x = np.asarray([r.features for r in records])
            y = np.asarray([r.label for r in records], dtype=np.int64)
            return TaskSet(name, x, y, x, y)

        if old_part and new_part:
            return profile(
                [base, candidate],
                [as_task("retained", old_part), as_task("update", new_part)],
                steps_per_task=[self._bootstrap_steps, max(1, update_steps)],
            )
        return profile([candidate], [as_task("update", list(holdout))],
                       steps_per_task=[max(1, update_steps)])

    def _model_of(self, version_id: int) -> Model:
        version = self.registry.get(version_id)
        return Model(ParamLayout.from_dict(version.layout),
                     np.asarray(version.params, dtype=np.float64))

    def _deploy(self, version_id: int, actor: str, manual_override: bool, t: int,
                model: Model | None = None) -> None:
        self.registry.deploy(version_id, manual_override=manual_override, actor=actor,
                             created_at=t)
        self.model = model if model is not None else self._model_of(version_id)
        self.events.append("deployed", t, version_id=version_id,
                           num_classes=self.model.layout.num_classes, actor=actor,
                           manual_override=manual_override)
        # the new model owns the stream from here: detection pauses until a
        # full window of post-deploy traffic forms the next reference
        self.monitor.reset_after_deploy((), known_classes=self.model.known_classes)
        self._rolling.clear()
        self._last_report = None
        self._awaiting_manual = None
        self._pending_si_state = None

    # -- operator controls ------------------------------------------------------

    def approve(self, version_id: int, actor: str):
        """Operator override: mark accepted and deploy immediately."""
        self.registry.override_verdict(version_id, ACCEPTED, actor, created_at=self._t)
        self.events.append("verdict_override", self._t, version_id=version_id,
                           decision=ACCEPTED, actor=actor)
        if self._awaiting_manual == version_id and self._pending_si_state is not None:
            self._si_state = self._pending_si_state
        self._deploy(version_id, actor=actor, manual_override=True, t=self._t)
        return self.registry.get(version_id)

    def reject_candidate(self, version_id: int, actor: str):
        self.registry.override_verdict(version_id, REJECTED, actor, created_at=self._t)
        self.registry.reject(version_id, actor=actor, created_at=self._t)
        self.events.append("rejected", self._t, version_id=version_id, actor=actor)
        if self._awaiting_manual == version_id:
            self._awaiting_manual = None
            self._pending_si_state = None
        return self.registry.get(version_id)

    def rollback(self, actor: str):
        version = self.registry.rollback(actor=actor, created_at=self._t)
        self.events.append("rollback", self._t, version_id=version.version_id,
                           num_classes=version.layout["num_classes"], actor=actor)
        self.model = self._model_of(version.version_id)
        self.monitor.reset_after_deploy((), known_classes=self.model.known_classes)
        self._rolling.clear()
        self._last_report = None
        self._si_state = None
        return version

    def update_policy(self, patch: dict) -> ServiceConfig:
        """Apply a validated threshold patch; detector state is preserved."""
        self.config = apply_policy_patch(self.config, patch)
        self.monitor.policy = self.config.drift_policy
        self.events.append("policy_updated", self._t, patch=patch)
        return self.config

    # -- status -------------------------------------------------------------------

    def status(self) -> dict:
        rolling = [b for b in self._rolling]
        return {
            "service_name": self.config.service_name,
            "learned_classes": self.model.layout.num_classes if self.model else 0,
            "current_accuracy": (sum(rolling) / len(rolling)) if rolling else None,
            "drift_magnitude": self._last_report.magnitude if self._last_report else 0.0,
            "deployed_version": self.registry.deployed_id,
            "pipeline_state": "validating" if self._awaiting_manual is not None
                              else "serving",
        }


def replay_status(events: Sequence[dict]) -> dict:
    """Recompute the status answer purely from event-log records.

    The log is the source of truth: this must agree with Pipeline.status()
    at any quiescent point.
    """
    window_size = 500
    service_name = ""
    deployed_version = None
    learned_classes = 0
    magnitude = 0.0
    awaiting: int | None = None
    rolling: deque[bool] = deque(maxlen=window_size)
    for event in events:
        kind = event["kind"]
        if kind == "service_started":
            service_name = event["service"]
            window_size = event["window_size"]
            rolling = deque(maxlen=window_size)
        elif kind in ("deployed", "rollback"):
            deployed_version = event["version_id"]
            learned_classes = event["num_classes"]
            magnitude = 0.0
            rolling.clear()
            awaiting = None
        elif kind == "request":
            if event["correct"] is not None:
                rolling.append(bool(event["correct"]))
        elif kind == "drift_report":
            magnitude = event["magnitude"]
        elif kind == "awaiting_manual":
            awaiting = event["version_id"]
        elif kind == "rejected" and awaiting == event.get("version_id"):
            awaiting = None
    rolling_list = list(rolling)
    return {
        "service_name": service_name,
        "learned_classes": learned_classes,
        "current_accuracy": (sum(rolling_list) / len(rolling_list)) if rolling_list
                            else None,
        "drift_magnitude": magnitude,
        "deployed_version": deployed_version,
        "pipeline_state": "validating" if awaiting is not None else "serving",
    }


def replace_loss_free(cl: CLPolicy) -> CLPolicy:
    """Bootstrap trains plain cross-entropy regardless of the CL loss kind."""
    return replace(cl, loss="none")


def run_pipeline(
    config: ServiceConfig,
    x: np.ndarray,
    y: np.ndarray,
    seed: int = 0,
    bootstrap_n: int | None = None,
    event_path: str | Path | None = None,
    registry_path: str | Path | None = None,
) -> Pipeline:
    """Bootstrap on the stream head, then serve the remainder online."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = bootstrap_n if bootstrap_n is not None else config.drift_policy.window_size
    pipeline = Pipeline(config, seed=seed, event_path=event_path,
                        registry_path=registry_path)
    pipeline.bootstrap(x[:n], y[:n])
    for i in range(n, len(x)):
        pipeline.serve(x[i], int(y[i]))
    return pipeline
