"""Shared fixtures and small builders used across the suite."""

from __future__ import annotations

import numpy as np
import pytest

from driftctl import (
    CLPolicy,
    DriftPolicy,
    ModelSpec,
    RequestRecord,
    ServiceConfig,
    ValidationPolicy,
)


def make_records(
    n: int,
    dim: int = 3,
    seed: int = 0,
    classes: tuple[int, ...] = (0, 1),
    start_id: int = 0,
    start_arrival: int = 0,
    shift: float = 0.0,
    labeled: bool = True,
) -> list[RequestRecord]:
    """Monotone, validated records with seeded features and confidences."""
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        cls = int(classes[i % len(classes)])
        features = tuple(float(v) for v in rng.normal(shift, 1.0, size=dim))
        records.append(
            RequestRecord(
                record_id=start_id + i,
                arrival=start_arrival + i,
                features=features,
                prediction=cls,
                confidence=float(rng.uniform(0.5, 1.0)),
                label=cls if labeled else None,
                label_source="online" if labeled else "none",
            )
        )
    return records


@pytest.fixture
def small_config() -> ServiceConfig:
    """Desk-scale service config: fast to bootstrap, fast to retrain."""
    return ServiceConfig(
        service_name="unit",
        model_spec=ModelSpec(input_dim=4, num_classes=2, hidden_dim=0),
        drift_policy=DriftPolicy(window_size=100, check_interval=50),
        cl_policy=CLPolicy(loss="rehearsal", epochs=2, learning_rate=0.05),
        validation_policy=ValidationPolicy(min_accuracy=0.5),
    )
