"""Service configuration: strict YAML schema, defaults, round-trip serialization.

The config file is the single source of orchestration knobs: model shape,
drift policy, continual-learning policy, validation gates and cluster layout.
Unknown keys are rejected so typos fail loudly at startup instead of being
silently ignored in production.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Any

import yaml

from .errors import ConfigError

LOSS_KINDS = ("none", "ewc", "si", "rehearsal", "ewc+rehearsal")
PLACEMENTS = ("colocate_fifo", "dedicated_worker", "inference_priority")
DETECTORS = ("ks", "eddm")


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    num_classes: int
    hidden_dim: int = 0  # 0 = logistic regression, >0 = one tanh hidden layer

    @property
    def param_count(self) -> int:
        d, h, c = self.input_dim, self.hidden_dim, self.num_classes
        if h == 0:
            return c * d + c
        return h * d + h + c * h + c


@dataclass(frozen=True)
class DriftPolicy:
    detectors: tuple[str, ...] = ("ks", "eddm")
    window_size: int = 500
    check_interval: int = 100
    magnitude_threshold: float = 0.05  # KS p-value threshold, Bonferroni-corrected per marginal
    min_errors_warmup: int = 30


@dataclass(frozen=True)
class ScenarioThresholds:
    tau_nc: float = 0.5
    tau_offline: float = 1.0


@dataclass(frozen=True)
class CLPolicy:
    loss: str = "ewc+rehearsal"
    ewc_lambda: float = 100.0
    si_c: float = 0.1
    si_xi: float = 0.1
    rehearsal_ratio: float = 0.5
    epochs: int = 5
    learning_rate: float = 0.05
    batch_size: int = 32
    scenario_thresholds: ScenarioThresholds = field(default_factory=ScenarioThresholds)

    @property
    def ewc_enabled(self) -> bool:
        return self.loss in ("ewc", "ewc+rehearsal")

    @property
    def si_enabled(self) -> bool:
        return self.loss == "si"

    @property
    def rehearsal_enabled(self) -> bool:
        return self.loss in ("rehearsal", "ewc+rehearsal")


@dataclass(frozen=True)
class ValidationPolicy:
    holdout_fraction: float = 0.2
    max_accuracy_drop: float = 0.05
    min_accuracy: float = 0.6
    ab_significance: float = 0.05
    require_manual_approval: bool = False


@dataclass(frozen=True)
class ClusterPolicy:
    workers: int = 1
    placement: str = "colocate_fifo"
    request_rate: float = 100.0  # requests per second
    base_service_time: float = 5.0  # ms


@dataclass(frozen=True)
class ServiceConfig:
    service_name: str
    model_spec: ModelSpec
    drift_policy: DriftPolicy = field(default_factory=DriftPolicy)
    cl_policy: CLPolicy = field(default_factory=CLPolicy)
    validation_policy: ValidationPolicy = field(default_factory=ValidationPolicy)
    cluster_policy: ClusterPolicy = field(default_factory=ClusterPolicy)


# ---------------------------------------------------------------------------
# Validation helpers.  Each raises ConfigError with the dotted field path.


def _require(mapping: dict, key: str, path: str) -> Any:
    if key not in mapping:
        raise ConfigError("required field missing", field=f"{path}{key}")
    return mapping[key]


def _as_int(value: Any, path: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected integer, got {type(value).__name__}", field=path)
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be >= {minimum}, got {value}", field=path)
    return value


def _as_float(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected number, got {type(value).__name__}", field=path)
    return float(value)


def _as_fraction(value: Any, path: str) -> float:
    out = _as_float(value, path)
    if not 0.0 <= out <= 1.0:
        raise ConfigError(f"out-of-range: must be in [0, 1], got {out}", field=path)
    return out


def _as_positive(value: Any, path: str) -> float:
    out = _as_float(value, path)
    if out <= 0.0:
        raise ConfigError(f"must be > 0, got {out}", field=path)
    return out


def _as_nonneg(value: Any, path: str) -> float:
    out = _as_float(value, path)
    if out < 0.0:
        raise ConfigError(f"must be >= 0, got {out}", field=path)
    return out


def _as_bool(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"expected boolean, got {type(value).__name__}", field=path)
    return value


def _as_choice(value: Any, choices: tuple[str, ...], path: str) -> str:
    if value not in choices:
        raise ConfigError(f"must be one of {list(choices)}, got {value!r}", field=path)
    return value


def _reject_unknown(mapping: dict, known: set[str], path: str) -> None:
    for key in mapping:
        if key not in known:
            raise ConfigError("unknown key", field=f"{path}{key}")


def _as_section(value: Any, path: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"expected mapping, got {type(value).__name__}", field=path)
    return value


def _parse_model_spec(raw: dict) -> ModelSpec:
    _reject_unknown(raw, {"input_dim", "num_classes", "hidden_dim"}, "model_spec.")
    return ModelSpec(
        input_dim=_as_int(_require(raw, "input_dim", "model_spec."), "model_spec.input_dim", minimum=1),
        num_classes=_as_int(_require(raw, "num_classes", "model_spec."), "model_spec.num_classes", minimum=2),
        hidden_dim=_as_int(raw.get("hidden_dim", 0), "model_spec.hidden_dim", minimum=0),
    )


def _parse_drift_policy(raw: dict) -> DriftPolicy:
    path = "drift_policy."
    _reject_unknown(
        raw,
        {"detectors", "window_size", "check_interval", "magnitude_threshold", "min_errors_warmup"},
        path,
    )
    detectors = raw.get("detectors", list(DETECTORS))
    if not isinstance(detectors, list) or not detectors:
        raise ConfigError("expected non-empty list", field=path + "detectors")
    for det in detectors:
        _as_choice(det, DETECTORS, path + "detectors")
    return DriftPolicy(
        detectors=tuple(detectors),
        window_size=_as_int(raw.get("window_size", 500), path + "window_size", minimum=1),
        check_interval=_as_int(raw.get("check_interval", 100), path + "check_interval", minimum=1),
        magnitude_threshold=_as_fraction(raw.get("magnitude_threshold", 0.05), path + "magnitude_threshold"),
        min_errors_warmup=_as_int(raw.get("min_errors_warmup", 30), path + "min_errors_warmup", minimum=1),
    )


def _parse_thresholds(raw: dict) -> ScenarioThresholds:
    path = "cl_policy.scenario_thresholds."
    _reject_unknown(raw, {"tau_nc", "tau_offline"}, path)
    tau_nc = _as_fraction(raw.get("tau_nc", 0.5), path + "tau_nc")
    tau_offline = _as_fraction(raw.get("tau_offline", 1.0), path + "tau_offline")
    # Both thresholds are levels in (0, 1]; they are independent axes.
    if tau_nc <= 0.0:
        raise ConfigError("must be in (0, 1]", field=path + "tau_nc")
    if tau_offline <= 0.0:
        raise ConfigError("must be in (0, 1]", field=path + "tau_offline")
    return ScenarioThresholds(tau_nc=tau_nc, tau_offline=tau_offline)


def _parse_cl_policy(raw: dict) -> CLPolicy:
    path = "cl_policy."
    _reject_unknown(
        raw,
        {"loss", "lambda", "si_c", "si_xi", "rehearsal_ratio", "epochs",
         "learning_rate", "batch_size", "scenario_thresholds"},
        path,
    )
    return CLPolicy(
        loss=_as_choice(raw.get("loss", "ewc+rehearsal"), LOSS_KINDS, path + "loss"),
        ewc_lambda=_as_nonneg(raw.get("lambda", 100.0), path + "lambda"),
        si_c=_as_nonneg(raw.get("si_c", 0.1), path + "si_c"),
        si_xi=_as_positive(raw.get("si_xi", 0.1), path + "si_xi"),
        rehearsal_ratio=_as_fraction(raw.get("rehearsal_ratio", 0.5), path + "rehearsal_ratio"),
        epochs=_as_int(raw.get("epochs", 5), path + "epochs", minimum=0),
        learning_rate=_as_positive(raw.get("learning_rate", 0.05), path + "learning_rate"),
        batch_size=_as_int(raw.get("batch_size", 32), path + "batch_size", minimum=1),
        scenario_thresholds=_parse_thresholds(
            _as_section(raw.get("scenario_thresholds"), path + "scenario_thresholds")
        ),
    )


def _parse_validation_policy(raw: dict) -> ValidationPolicy:
    path = "validation_policy."
    _reject_unknown(
        raw,
        {"holdout_fraction", "max_accuracy_drop", "min_accuracy", "ab_significance",
         "require_manual_approval"},
        path,
    )
    return ValidationPolicy(
        holdout_fraction=_as_fraction(raw.get("holdout_fraction", 0.2), path + "holdout_fraction"),
        max_accuracy_drop=_as_fraction(raw.get("max_accuracy_drop", 0.05), path + "max_accuracy_drop"),
        min_accuracy=_as_fraction(raw.get("min_accuracy", 0.6), path + "min_accuracy"),
        ab_significance=_as_fraction(raw.get("ab_significance", 0.05), path + "ab_significance"),
        require_manual_approval=_as_bool(raw.get("require_manual_approval", False),
                                         path + "require_manual_approval"),
    )


def _parse_cluster_policy(raw: dict) -> ClusterPolicy:
    path = "cluster_policy."
    _reject_unknown(raw, {"workers", "placement", "request_rate", "base_service_time"}, path)
    return ClusterPolicy(
        workers=_as_int(raw.get("workers", 1), path + "workers", minimum=1),
        placement=_as_choice(raw.get("placement", "colocate_fifo"), PLACEMENTS, path + "placement"),
        request_rate=_as_positive(raw.get("request_rate", 100.0), path + "request_rate"),
        base_service_time=_as_positive(raw.get("base_service_time", 5.0), path + "base_service_time"),
    )


def parse_config(text: str) -> ServiceConfig:
    """Parse and validate a service configuration document.

    Applies documented defaults for every omitted optional field and rejects
    unknown keys, type mismatches and out-of-range values with the offending
    field path.
    """
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        line = None
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            line = mark.line + 1
        raise ConfigError(f"invalid YAML: {exc}", line=line) from exc
    if not isinstance(raw, dict):
        raise ConfigError("top-level document must be a mapping")

    _reject_unknown(
        raw,
        {"service_name", "model_spec", "drift_policy", "cl_policy",
         "validation_policy", "cluster_policy"},
        "",
    )
    service_name = _require(raw, "service_name", "")
    if not isinstance(service_name, str) or not service_name:
        raise ConfigError("expected non-empty string", field="service_name")
    model_spec_raw = _require(raw, "model_spec", "")
    if not isinstance(model_spec_raw, dict):
        raise ConfigError("expected mapping", field="model_spec")

    return ServiceConfig(
        service_name=service_name,
        model_spec=_parse_model_spec(model_spec_raw),
        drift_policy=_parse_drift_policy(_as_section(raw.get("drift_policy"), "drift_policy")),
        cl_policy=_parse_cl_policy(_as_section(raw.get("cl_policy"), "cl_policy")),
        validation_policy=_parse_validation_policy(
            _as_section(raw.get("validation_policy"), "validation_policy")
        ),
        cluster_policy=_parse_cluster_policy(
            _as_section(raw.get("cluster_policy"), "cluster_policy")
        ),
    )


def config_to_dict(cfg: ServiceConfig) -> dict:
    """Nested plain-dict form of a config, using file-schema key names."""
    out = asdict(cfg)
    cl = out["cl_policy"]
    cl["lambda"] = cl.pop("ewc_lambda")
    out["drift_policy"]["detectors"] = list(cfg.drift_policy.detectors)
    return out


def serialize_config(cfg: ServiceConfig) -> str:
    """Render a config back to YAML text; parse(serialize(cfg)) == cfg."""
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def apply_policy_patch(cfg: ServiceConfig, patch: dict) -> ServiceConfig:
    """Merge a runtime threshold patch into a config, fully re-validated.

    Only the tunable policy sections may be patched; each named section is
    shallow-merged over the current values and the result goes through the
    same validation as a fresh config file, so bad patches fail with the
    exact offending field path.
    """
    allowed = {"drift_policy", "validation_policy", "cl_policy"}
    if not isinstance(patch, dict) or not patch:
        raise ConfigError("patch must be a non-empty mapping")
    base = config_to_dict(cfg)
    for section, values in patch.items():
        if section not in allowed:
            raise ConfigError("unknown key", field=section)
        if not isinstance(values, dict):
            raise ConfigError("expected mapping", field=section)
        base[section].update(values)
    return parse_config(yaml.safe_dump(base, sort_keys=False))
