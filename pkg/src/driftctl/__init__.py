"""driftctl: a drift-aware continual-learning control plane for model serving.

The package closes the loop around a deployed classifier: it watches the
request stream for distribution shift, retrains with forgetting-resistant
losses when drift is confirmed, gates every candidate behind holdout
validation, and keeps an append-only, replayable record of each decision.
A discrete-event cluster simulator quantifies the latency cost of
co-locating training with inference, and an HTTP gateway exposes the whole
loop to operators.
"""

from .config import (
    CLPolicy,
    ClusterPolicy,
    DriftPolicy,
    ModelSpec,
    ScenarioThresholds,
    ServiceConfig,
    ValidationPolicy,
    apply_policy_patch,
    config_to_dict,
    parse_config,
    serialize_config,
)
from .data import (
    ClCache,
    DataManifest,
    LabelQueue,
    RequestRecord,
    materialize,
    render_query,
    sample_rehearsal,
)
from .drift import (
    DriftMonitor,
    DriftReport,
    EddmState,
    KSResult,
    eddm_update,
    evaluate_window,
    ks_p_value,
    ks_statistic,
    ks_test,
)
from .errors import (
    ConfigError,
    DimensionMismatch,
    DriftctlError,
    EmptyCache,
    EmptyData,
    EmptyHoldout,
    EmptyList,
    EmptySample,
    InvalidRecord,
    LengthMismatch,
    ManifestMismatch,
    MissingRecords,
    MissingTestSet,
    NoWorkers,
    NonMonotoneIndex,
    NotEnqueued,
    NothingToRollBack,
    NotValidated,
    NumericalDivergence,
    OverlappingHoldout,
    SingleTask,
    UnknownRecord,
    UnknownVersion,
    UnlabeledBatch,
    UnlabeledNewData,
)
from .evaluator import (
    MetricReport,
    TaskSet,
    ValidationVerdict,
    accuracy,
    bwt,
    carve_holdout,
    forgetting_benchmark,
    profile,
    two_proportion_z,
    validate,
)
from .events import EventLog, canonical_json
from .gateway import create_app
from .learner import (
    EwcAnchor,
    Model,
    ParamLayout,
    SiState,
    TrainingReport,
    UpdateJob,
    expand_for_labels,
    fisher_diag,
    fit,
    forward,
    loss_and_grad,
    predict,
    run_update,
    select_scenario,
)
from .pipeline import Pipeline, replay_status, run_pipeline
from .registry import ModelCard, ModelRegistry, ModelVersion
from .sim import (
    InterferenceModel,
    SimJob,
    SimTrace,
    Worker,
    Workload,
    percentile,
    place_job,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "CLPolicy",
    "ClCache",
    "ClusterPolicy",
    "ConfigError",
    "DataManifest",
    "DimensionMismatch",
    "DriftMonitor",
    "DriftPolicy",
    "DriftReport",
    "DriftctlError",
    "EddmState",
    "EmptyCache",
    "EmptyData",
    "EmptyHoldout",
    "EmptyList",
    "EmptySample",
    "EventLog",
    "EwcAnchor",
    "InterferenceModel",
    "InvalidRecord",
    "KSResult",
    "LabelQueue",
    "LengthMismatch",
    "ManifestMismatch",
    "MetricReport",
    "MissingRecords",
    "MissingTestSet",
    "Model",
    "ModelCard",
    "ModelRegistry",
    "ModelSpec",
    "ModelVersion",
    "NoWorkers",
    "NonMonotoneIndex",
    "NotEnqueued",
    "NothingToRollBack",
    "NotValidated",
    "NumericalDivergence",
    "OverlappingHoldout",
    "ParamLayout",
    "Pipeline",
    "RequestRecord",
    "ScenarioThresholds",
    "ServiceConfig",
    "SiState",
    "SimJob",
    "SimTrace",
    "SingleTask",
    "TaskSet",
    "TrainingReport",
    "UnknownRecord",
    "UnknownVersion",
    "UnlabeledBatch",
    "UnlabeledNewData",
    "UpdateJob",
    "ValidationPolicy",
    "ValidationVerdict",
    "Worker",
    "Workload",
    "accuracy",
    "apply_policy_patch",
    "bwt",
    "canonical_json",
    "carve_holdout",
    "config_to_dict",
    "create_app",
    "eddm_update",
    "evaluate_window",
    "expand_for_labels",
    "fisher_diag",
    "fit",
    "forgetting_benchmark",
    "forward",
    "ks_p_value",
    "ks_statistic",
    "ks_test",
    "loss_and_grad",
    "materialize",
    "parse_config",
    "percentile",
    "place_job",
    "predict",
    "profile",
    "render_query",
    "replay_status",
    "run_pipeline",
    "run_update",
    "sample_rehearsal",
    "select_scenario",
    "serialize_config",
    "simulate",
    "two_proportion_z",
    "validate",
]
