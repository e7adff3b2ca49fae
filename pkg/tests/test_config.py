"""Config parsing, validation field paths, serialization round-trips, patches."""

from __future__ import annotations

import dataclasses

import pytest

from driftctl import (
    CLPolicy,
    ClusterPolicy,
    ConfigError,
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

MINIMAL_YAML = """
service_name: scorer
model_spec:
  input_dim: 10
  num_classes: 2
"""


def test_minimal_config_gets_defaults():
    cfg = parse_config(MINIMAL_YAML)
    assert cfg.service_name == "scorer"
    assert cfg.model_spec == ModelSpec(input_dim=10, num_classes=2, hidden_dim=0)
    assert cfg.drift_policy == DriftPolicy()
    assert cfg.drift_policy.window_size == 500
    assert cfg.drift_policy.check_interval == 100
    assert cfg.drift_policy.magnitude_threshold == 0.05
    assert cfg.cl_policy.loss == "ewc+rehearsal"
    assert cfg.cl_policy.ewc_lambda == 100.0
    assert cfg.cl_policy.si_c == 0.1
    assert cfg.cl_policy.rehearsal_ratio == 0.5
    assert cfg.validation_policy.holdout_fraction == 0.2
    assert cfg.cluster_policy.placement == "colocate_fifo"


def test_serialize_parse_round_trip_defaults():
    cfg = parse_config(MINIMAL_YAML)
    assert parse_config(serialize_config(cfg)) == cfg


def test_serialize_parse_round_trip_customized():
    cfg = ServiceConfig(
        service_name="fraud",
        model_spec=ModelSpec(input_dim=7, num_classes=5, hidden_dim=32),
        drift_policy=DriftPolicy(
            detectors=("ks",),
            window_size=250,
            check_interval=25,
            magnitude_threshold=0.01,
            min_errors_warmup=10,
        ),
        cl_policy=CLPolicy(
            loss="si",
            ewc_lambda=7.5,
            si_c=0.9,
            si_xi=0.5,
            rehearsal_ratio=0.25,
            epochs=9,
            learning_rate=0.001,
            batch_size=64,
            scenario_thresholds=ScenarioThresholds(tau_nc=0.3, tau_offline=0.8),
        ),
        validation_policy=ValidationPolicy(
            holdout_fraction=0.5,
            max_accuracy_drop=0.01,
            min_accuracy=0.9,
            ab_significance=0.01,
            require_manual_approval=True,
        ),
        cluster_policy=ClusterPolicy(
            workers=4,
            placement="dedicated_worker",
            request_rate=250.0,
            base_service_time=2.0,
        ),
    )
    assert parse_config(serialize_config(cfg)) == cfg


def test_round_trip_survives_randomized_configs():
    import random

    rng = random.Random(42)
    losses = ["none", "ewc", "si", "rehearsal", "ewc+rehearsal"]
    placements = ["colocate_fifo", "dedicated_worker", "inference_priority"]
    for _ in range(50):
        cfg = ServiceConfig(
            service_name=f"svc-{rng.randint(0, 999)}",
            model_spec=ModelSpec(
                input_dim=rng.randint(1, 64),
                num_classes=rng.randint(2, 12),
                hidden_dim=rng.choice([0, 8, 16]),
            ),
            drift_policy=DriftPolicy(
                window_size=rng.randint(10, 2000),
                check_interval=rng.randint(1, 500),
                magnitude_threshold=rng.uniform(0.001, 1.0),
                min_errors_warmup=rng.randint(1, 100),
            ),
            cl_policy=CLPolicy(
                loss=rng.choice(losses),
                ewc_lambda=rng.uniform(0.0, 500.0),
                si_c=rng.uniform(0.0, 2.0),
                epochs=rng.randint(1, 40),
                learning_rate=rng.uniform(1e-4, 0.5),
                batch_size=rng.randint(1, 256),
            ),
            validation_policy=ValidationPolicy(
                holdout_fraction=rng.uniform(0.05, 0.95),
                min_accuracy=rng.uniform(0.0, 1.0),
            ),
            cluster_policy=ClusterPolicy(
                workers=rng.randint(1, 8),
                placement=rng.choice(placements),
            ),
        )
        assert parse_config(serialize_config(cfg)) == cfg


def test_config_to_dict_matches_round_trip():
    cfg = parse_config(MINIMAL_YAML)
    raw = config_to_dict(cfg)
    assert raw["service_name"] == "scorer"
    assert raw["model_spec"]["input_dim"] == 10
    assert raw["drift_policy"]["window_size"] == 500
    assert raw["cl_policy"]["loss"] == "ewc+rehearsal"


@pytest.mark.parametrize(
    "yaml_text, field_suffix",
    [
        ("service_name: x\n", "model_spec"),
        ("model_spec: {input_dim: 4, num_classes: 2}\n", "service_name"),
        (
            MINIMAL_YAML + "drift_policy: {magnitude_threshold: 1.5}\n",
            "drift_policy.magnitude_threshold",
        ),
        (MINIMAL_YAML + "drift_policy: {window_size: 0}\n", "drift_policy.window_size"),
        (
            MINIMAL_YAML + "drift_policy: {check_interval: -5}\n",
            "drift_policy.check_interval",
        ),
        (MINIMAL_YAML + "cl_policy: {loss: dropout}\n", "cl_policy.loss"),
        (MINIMAL_YAML + "cl_policy: {epochs: -1}\n", "cl_policy.epochs"),
        (
            MINIMAL_YAML + "cl_policy: {learning_rate: -0.1}\n",
            "cl_policy.learning_rate",
        ),
        (
            MINIMAL_YAML + "validation_policy: {holdout_fraction: 2.0}\n",
            "validation_policy.holdout_fraction",
        ),
        (MINIMAL_YAML + "cluster_policy: {workers: 0}\n", "cluster_policy.workers"),
        (
            MINIMAL_YAML + "cluster_policy: {placement: spread}\n",
            "cluster_policy.placement",
        ),
        (MINIMAL_YAML + "unknown_section: {}\n", "unknown_section"),
        (
            "service_name: x\nmodel_spec: {input_dim: 0, num_classes: 2}\n",
            "model_spec.input_dim",
        ),
        (
            "service_name: x\nmodel_spec: {input_dim: 4, num_classes: 1}\n",
            "model_spec.num_classes",
        ),
    ],
)
def test_invalid_config_reports_field_path(yaml_text, field_suffix):
    with pytest.raises(ConfigError) as err:
        parse_config(yaml_text)
    assert err.value.field is not None
    assert err.value.field.endswith(field_suffix), (
        f"expected field ending {field_suffix!r}, got {err.value.field!r}"
    )


def test_malformed_yaml_is_a_config_error():
    with pytest.raises(ConfigError):
        parse_config("service_name: [unclosed\n")
    with pytest.raises(ConfigError):
        parse_config("- just\n- a\n- list\n")


def test_policy_patch_returns_new_config_and_keeps_original():
    cfg = parse_config(MINIMAL_YAML)
    patched = apply_policy_patch(
        cfg, {"drift_policy": {"magnitude_threshold": 0.01, "window_size": 64}}
    )
    assert patched.drift_policy.magnitude_threshold == 0.01
    assert patched.drift_policy.window_size == 64
    assert cfg.drift_policy.magnitude_threshold == 0.05, "original must be untouched"
    assert patched.service_name == cfg.service_name
    assert patched.cl_policy == cfg.cl_policy


def test_policy_patch_validates_values():
    cfg = parse_config(MINIMAL_YAML)
    with pytest.raises(ConfigError) as err:
        apply_policy_patch(cfg, {"drift_policy": {"magnitude_threshold": 1.5}})
    assert err.value.field.endswith("magnitude_threshold")
    with pytest.raises(ConfigError):
        apply_policy_patch(cfg, {})
    with pytest.raises(ConfigError) as err2:
        apply_policy_patch(cfg, {"nonsense": {"a": 1}})
    assert err2.value.field == "nonsense"


def test_config_dataclasses_are_frozen():
    cfg = parse_config(MINIMAL_YAML)
    with pytest.raises(dataclasses.FrozenInstanceError):
        cfg.service_name = "other"
    with pytest.raises(dataclasses.FrozenInstanceError):
        cfg.drift_policy.window_size = 1
