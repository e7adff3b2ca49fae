"""HTTP/JSON gateway: the operational surface of the control plane.

One FastAPI app per process hosting one or more pipelines.  Routes cover
inference, labeling, service status, version history, model cards, manual
approval, rollback, and live policy edits.  All errors share one body shape
({code, message, field?}) and every mutation can carry an Idempotency-Key
header: replaying the same key with the same request returns the stored
response; the same key with a different request is refused.
"""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path
from typing import Any, Callable

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from .data import DataManifest, render_query
from .errors import (
    ConfigError,
    DimensionMismatch,
    DriftctlError,
    InvalidRecord,
    NotEnqueued,
    NothingToRollBack,
    NotValidated,
    UnknownRecord,
    UnknownVersion,
)
from .pipeline import Pipeline

_STATUS_BY_ERROR: tuple[tuple[type, int, str], ...] = (
    (UnknownRecord, 404, "not_found"),
    (UnknownVersion, 404, "not_found"),
    (NotEnqueued, 409, "conflict"),
    (NothingToRollBack, 409, "conflict"),
    (NotValidated, 409, "conflict"),
    (ConfigError, 422, "invalid"),
    (DimensionMismatch, 422, "invalid"),
    (InvalidRecord, 422, "invalid"),
)


class ApiError(Exception):
    """Route-level failure carrying the uniform error body."""

    def __init__(self, status: int, code: str, message: str,
                 field: str | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.field = field

    def body(self) -> dict:
        body = {"code": self.code, "message": self.message}
        if self.field is not None:
            body["field"] = self.field
        return body


def _to_api_error(exc: Exception) -> ApiError:
    for err_type, status, code in _STATUS_BY_ERROR:
        if isinstance(exc, err_type):
            field = getattr(exc, "field", None)
            return ApiError(status, code, str(exc), field=field)
    if isinstance(exc, DriftctlError):
        return ApiError(409, "conflict", str(exc))
    raise exc


def _require_field(payload: Any, name: str, kind: type, route_field: str) -> Any:
    if not isinstance(payload, dict) or name not in payload:
        raise ApiError(422, "invalid", f"missing required field '{name}'",
                       field=route_field)
    value = payload[name]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ApiError(422, "invalid", f"field '{name}' must be a number",
                           field=route_field)
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ApiError(422, "invalid", f"field '{name}' must be an integer",
                           field=route_field)
        return value
    if kind is str:
        if not isinstance(value, str) or not value:
            raise ApiError(422, "invalid", f"field '{name}' must be a non-empty string",
                           field=route_field)
        return value
    if kind is list:
        if not isinstance(value, list):
            raise ApiError(422, "invalid", f"field '{name}' must be a list",
                           field=route_field)
        return value
    return value


class _IdempotencyStore:
    """Replays stored responses for retried mutations (same key, same request)."""

    def __init__(self):
        self._seen: dict[str, tuple[str, int, Any]] = {}

    def run(self, key: str | None, route: str, body: bytes,
            executor: Callable[[], tuple[int, Any]]) -> tuple[int, Any]:
        if key is None:
            return executor()
        digest = hashlib.sha256(route.encode("utf-8") + b"\0" + body).hexdigest()
        if key in self._seen:
            prev_digest, status, payload = self._seen[key]
            if prev_digest != digest:
                raise ApiError(409, "idempotency_conflict",
                               "idempotency key reused with a different request")
            return status, payload
        status, payload = executor()
        if 200 <= status < 300:
            self._seen[key] = (digest, status, payload)
        return status, payload


def create_app(pipelines: dict[str, Pipeline] | Pipeline,
               static_dir: str | Path | None = None) -> FastAPI:
    """Build the gateway app over one pipeline or a name-keyed set of them."""
    if isinstance(pipelines, Pipeline):
        pipelines = {pipelines.config.service_name: pipelines}

    app = FastAPI(title="driftctl gateway", docs_url=None, redoc_url=None)
    app.state.pipelines = pipelines
    app.state.lock = threading.Lock()
    app.state.idempotency = _IdempotencyStore()

    def service(name: str) -> Pipeline:
        pipeline = pipelines.get(name)
        if pipeline is None:
            raise ApiError(404, "not_found", f"unknown service '{name}'")
        return pipeline

    def version_owner(version_id: int) -> Pipeline:
        for pipeline in pipelines.values():
            if version_id in pipeline.registry.versions:
                return pipeline
        raise ApiError(404, "not_found", f"version {version_id} not found")

    @app.exception_handler(ApiError)
    async def handle_api_error(_request: Request, exc: ApiError) -> JSONResponse:
        return JSONResponse(exc.body(), status_code=exc.status)

    @app.exception_handler(DriftctlError)
    async def handle_domain_error(_request: Request,
                                  exc: DriftctlError) -> JSONResponse:
        api = _to_api_error(exc)
        return JSONResponse(api.body(), status_code=api.status)

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(_request: Request,
                                      exc: RequestValidationError) -> JSONResponse:
        return JSONResponse({"code": "invalid", "message": str(exc)}, status_code=422)

    async def mutate(request: Request,
                     executor: Callable[[dict], tuple[int, Any]]) -> Response:
        raw = await request.body()
        if raw:
            try:
                payload = json.loads(raw)
            except ValueError:
                raise ApiError(422, "invalid", "request body is not valid JSON")
        else:
            payload = {}
        key = request.headers.get("Idempotency-Key")
        with app.state.lock:
            status, body = app.state.idempotency.run(
                key, request.url.path, raw, lambda: executor(payload))
        if status == 204:
            return Response(status_code=204)
        return JSONResponse(body, status_code=status)

    # -- serving ---------------------------------------------------------------

    @app.post("/v1/services/{name}/infer")
    async def infer(name: str, request: Request) -> Response:
        pipeline = service(name)

        def run(payload: dict) -> tuple[int, Any]:
            features = _require_field(payload, "features", list, "features")
            label = payload.get("label")
            if label is not None and (isinstance(label, bool)
                                      or not isinstance(label, int)):
                raise ApiError(422, "invalid", "field 'label' must be an integer",
                               field="label")
            for value in features:
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ApiError(422, "invalid",
                                   "features must be a list of numbers",
                                   field="features")
            record = pipeline.serve(features, label=label)
            return 200, {
                "prediction": record.prediction,
                "confidence": record.confidence,
                "version_id": pipeline.registry.deployed_id,
                "record_id": record.record_id,
            }

        return await mutate(request, run)

    @app.post("/v1/services/{name}/label")
    async def label(name: str, request: Request) -> Response:
        pipeline = service(name)

        def run(payload: dict) -> tuple[int, Any]:
            record_id = _require_field(payload, "record_id", int, "record_id")
            label_value = _require_field(payload, "label", int, "label")
            pipeline.provide_label(record_id, label_value)
            return 204, None

        return await mutate(request, run)

    # -- observation -----------------------------------------------------------

    @app.get("/v1/services/{name}/status")
    async def status(name: str) -> JSONResponse:
        with app.state.lock:
            return JSONResponse(service(name).status())

    @app.get("/v1/services/{name}/history")
    async def history(name: str) -> JSONResponse:
        with app.state.lock:
            return JSONResponse(service(name).registry.history())

    @app.get("/v1/services/{name}/drift")
    async def drift_reports(name: str, limit: int = 50) -> JSONResponse:
        pipeline = service(name)
        with app.state.lock:
            reports = pipeline.events.of_kind("drift_report")[-limit:]
        return JSONResponse(reports)

    @app.get("/v1/versions/{version_id}/card")
    async def card(version_id: int) -> JSONResponse:
        pipeline = version_owner(version_id)
        with app.state.lock:
            version = pipeline.registry.get(version_id)
            manifest_dict = version.card.data_manifest
            sql = render_query(DataManifest.from_dict(manifest_dict))
            return JSONResponse({
                "version_id": version.version_id,
                "parent_id": version.parent_id,
                "status": version.status,
                "created_at": version.created_at,
                "verdict": version.effective_verdict,
                "loss_config": version.card.loss_config,
                "scenario": version.card.scenario,
                "benchmark": version.card.benchmark,
                "data_manifest": manifest_dict,
                "sql": sql,
                "validation": version.card.validation,
            })

    # -- operator controls -------------------------------------------------------

    @app.post("/v1/versions/{version_id}/approve")
    async def approve(version_id: int, request: Request) -> Response:
        pipeline = version_owner(version_id)

        def run(payload: dict) -> tuple[int, Any]:
            actor = _require_field(payload, "actor", str, "actor")
            version = pipeline.approve(version_id, actor)
            return 200, {
                "version_id": version.version_id,
                "status": version.status,
                "verdict": version.effective_verdict,
            }

        return await mutate(request, run)

    @app.post("/v1/versions/{version_id}/reject")
    async def reject(version_id: int, request: Request) -> Response:
        pipeline = version_owner(version_id)

        def run(payload: dict) -> tuple[int, Any]:
            actor = _require_field(payload, "actor", str, "actor")
            version = pipeline.reject_candidate(version_id, actor)
            return 200, {
                "version_id": version.version_id,
                "status": version.status,
                "verdict": version.effective_verdict,
            }

        return await mutate(request, run)

    @app.post("/v1/services/{name}/rollback")
    async def rollback(name: str, request: Request) -> Response:
        pipeline = service(name)

        def run(payload: dict) -> tuple[int, Any]:
            actor = _require_field(payload, "actor", str, "actor")
            version = pipeline.rollback(actor)
            return 200, {
                "deployed_version": version.version_id,
                "status": version.status,
            }

        return await mutate(request, run)

    @app.put("/v1/services/{name}/policy")
    async def put_policy(name: str, request: Request) -> Response:
        pipeline = service(name)

        def run(payload: dict) -> tuple[int, Any]:
            if not isinstance(payload, dict) or not payload:
                raise ApiError(422, "invalid", "policy patch must be a non-empty object")
            config = pipeline.update_policy(payload)
            return 200, {
                "drift_policy": {
                    "detectors": list(config.drift_policy.detectors),
                    "window_size": config.drift_policy.window_size,
                    "check_interval": config.drift_policy.check_interval,
                    "magnitude_threshold": config.drift_policy.magnitude_threshold,
                    "min_errors_warmup": config.drift_policy.min_errors_warmup,
                },
                "validation_policy": {
                    "holdout_fraction": config.validation_policy.holdout_fraction,
                    "max_accuracy_drop": config.validation_policy.max_accuracy_drop,
                    "min_accuracy": config.validation_policy.min_accuracy,
                    "ab_significance": config.validation_policy.ab_significance,
                    "require_manual_approval":
                        config.validation_policy.require_manual_approval,
                },
            }

        return await mutate(request, run)

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
