"""Registry lifecycle rules, append-only projection, randomized invariants."""

from __future__ import annotations

import random

import pytest

from driftctl import (
    ModelCard,
    ModelRegistry,
    NotValidated,
    NothingToRollBack,
    UnknownVersion,
)

DIM = 3
LAYOUT = {"input_dim": DIM, "hidden_dim": 0, "num_classes": 2}
PARAM_COUNT = 2 * DIM + 2


def card(decision: str = "accepted", scenario: str = "NI") -> ModelCard:
    return ModelCard(
        loss_config={"loss": "none"},
        scenario=scenario,
        benchmark={"final_acc": 0.9},
        data_manifest={"manifest_id": "m-test"},
        validation={"decision": decision, "reasons": ["unit"]},
    )


def params(fill: float = 0.0) -> list[float]:
    return [fill] * PARAM_COUNT


def test_register_assigns_sequential_ids_and_lineage_parent():
    reg = ModelRegistry(DIM)
    v1 = reg.register_version(params(1.0), LAYOUT, card())
    assert v1.version_id == 1
    assert v1.parent_id is None, "nothing deployed yet, so no parent"
    assert v1.status == "candidate"
    reg.deploy(1)
    v2 = reg.register_version(params(2.0), LAYOUT, card())
    assert v2.version_id == 2
    assert v2.parent_id == 1, "parent is the version deployed at registration"
    assert reg.get(1).params == tuple(params(1.0))


def test_deploy_requires_accepted_verdict():
    reg = ModelRegistry(DIM)
    reg.register_version(params(), LAYOUT, card(decision="rejected"))
    with pytest.raises(NotValidated):
        reg.deploy(1)
    reg.register_version(params(), LAYOUT, card(decision="pending_manual"))
    with pytest.raises(NotValidated):
        reg.deploy(2)
    reg.deploy(2, manual_override=True, actor="oncall")
    assert reg.deployed.version_id == 2


def test_deploy_archives_previous_and_keeps_single_deployment():
    reg = ModelRegistry(DIM)
    reg.register_version(params(1.0), LAYOUT, card())
    reg.register_version(params(2.0), LAYOUT, card())
    reg.deploy(1)
    reg.deploy(2)
    assert reg.get(1).status == "archived"
    assert reg.get(2).status == "deployed"
    assert reg.deployed.version_id == 2
    statuses = [v["status"] for v in reg.history()]
    assert statuses.count("deployed") == 1


def test_rollback_restores_most_recent_archived():
    reg = ModelRegistry(DIM)
    for fill in (1.0, 2.0, 3.0):
        reg.register_version(params(fill), LAYOUT, card())
    reg.deploy(1)
    reg.deploy(2)
    reg.deploy(3)
    restored = reg.rollback(actor="oncall")
    assert restored.version_id == 2
    assert reg.deployed.version_id == 2
    assert reg.get(3).status == "rolled_back"
    restored = reg.rollback(actor="oncall")
    assert restored.version_id == 1
    with pytest.raises(NothingToRollBack):
        reg.rollback(actor="oncall")


def test_rollback_without_deployment_fails():
    reg = ModelRegistry(DIM)
    with pytest.raises(NothingToRollBack):
        reg.rollback()


def test_override_verdict_enables_deploy():
    reg = ModelRegistry(DIM)
    reg.register_version(params(), LAYOUT, card(decision="pending_manual"))
    reg.override_verdict(1, "accepted", actor="oncall")
    reg.deploy(1)
    assert reg.deployed.version_id == 1


def test_reject_is_terminal():
    reg = ModelRegistry(DIM)
    reg.register_version(params(), LAYOUT, card(decision="pending_manual"))
    reg.reject(1, actor="oncall")
    assert reg.get(1).status == "rejected"
    with pytest.raises(NotValidated):
        reg.deploy(1)


def test_unknown_version_raises():
    reg = ModelRegistry(DIM)
    with pytest.raises(UnknownVersion):
        reg.get(99)
    with pytest.raises(UnknownVersion):
        reg.deploy(99)


def test_history_is_ordered_and_complete():
    reg = ModelRegistry(DIM)
    reg.register_version(params(1.0), LAYOUT, card())
    reg.register_version(params(2.0), LAYOUT, card(decision="rejected"))
    reg.deploy(1)
    reg.reject(2)
    rows = reg.history()
    assert [r["version_id"] for r in rows] == [1, 2]
    assert rows[0]["status"] == "deployed"
    assert rows[1]["status"] == "rejected"
    assert all("created_at" in r and "scenario" in r for r in rows)


def test_persistence_round_trip(tmp_path):
    path = tmp_path / "registry.jsonl"
    reg = ModelRegistry(DIM, path=path)
    reg.register_version(params(1.0), LAYOUT, card())
    reg.register_version(params(2.0), LAYOUT, card())
    reg.deploy(1)
    reg.deploy(2)
    reg.rollback(actor="oncall")

    reloaded = ModelRegistry(DIM, path=path)
    assert reloaded.deployed.version_id == 1
    assert reloaded.get(2).status == "rolled_back"
    assert reloaded.history() == reg.history()
    assert reloaded.projection() == reg.projection()


def test_randomized_operation_sequences_preserve_invariants():
    """1,000 random op sequences: projection stays append-only, at most one
    version is deployed, and the registry's own invariant check holds after
    every operation."""
    rng = random.Random(1234)
    decisions = ["accepted", "rejected", "pending_manual"]
    for _ in range(1000):
        reg = ModelRegistry(DIM)
        prev_projection: list[str] = []
        for _ in range(rng.randint(1, 12)):
            op = rng.randint(0, 4)
            try:
                if op == 0:
                    reg.register_version(
                        params(rng.random()), LAYOUT, card(rng.choice(decisions))
                    )
                elif op == 1:
                    reg.deploy(
                        rng.randint(1, 6), manual_override=rng.random() < 0.3,
                        actor="fuzz",
                    )
                elif op == 2:
                    reg.rollback(actor="fuzz")
                elif op == 3:
                    reg.reject(rng.randint(1, 6), actor="fuzz")
                else:
                    reg.override_verdict(
                        rng.randint(1, 6), rng.choice(["accepted", "rejected"]),
                        actor="fuzz",
                    )
            except (NotValidated, NothingToRollBack, UnknownVersion):
                pass  # rejected transitions must leave state untouched

            projection = reg.projection()
            assert projection[: len(prev_projection)] == prev_projection, (
                "projection rewrote history"
            )
            prev_projection = projection
            deployed = [v for v in reg.history() if v["status"] == "deployed"]
            assert len(deployed) <= 1
            reg.check_invariants()
