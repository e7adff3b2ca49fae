"""Append-only model registry with deployment lifecycle and rollback.

Every write is one immutable JSON record (schema_version 1): model versions
are appended once, and all later lifecycle changes (deploy, archive, reject,
rollback, manual verdict overrides) are separate records.  The in-memory
index is rebuilt by replaying the record log, so the on-disk file is both
the persistence format and the audit trail.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .errors import (
    DimensionMismatch,
    NothingToRollBack,
    NotValidated,
    UnknownVersion,
)
from .events import canonical_json

CANDIDATE = "candidate"
DEPLOYED = "deployed"
REJECTED = "rejected"
ROLLED_BACK = "rolled_back"
ARCHIVED = "archived"

_STATUSES = (CANDIDATE, DEPLOYED, REJECTED, ROLLED_BACK, ARCHIVED)


def layout_param_count(layout: dict) -> int:
    d = layout["input_dim"]
    h = layout.get("hidden_dim", 0)
    c = layout["num_classes"]
    if h == 0:
        return c * d + c
    return h * d + h + c * h + c


@dataclass(frozen=True)
class ModelCard:
    """Per-version dossier: training config, scenario, benchmark, data, verdict."""

    loss_config: dict
    scenario: str
    benchmark: dict
    data_manifest: dict
    validation: dict

    def to_dict(self) -> dict:
        return {
            "loss_config": self.loss_config,
            "scenario": self.scenario,
            "benchmark": self.benchmark,
            "data_manifest": self.data_manifest,
            "validation": self.validation,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelCard":
        return cls(
            loss_config=raw["loss_config"],
            scenario=raw["scenario"],
            benchmark=raw["benchmark"],
            data_manifest=raw["data_manifest"],
            validation=raw["validation"],
        )


@dataclass
class ModelVersion:
    """One registered parameter snapshot.  The record itself never changes;
    ``status`` and ``effective_verdict`` track the latest lifecycle records."""

    version_id: int
    parent_id: int | None
    params: tuple[float, ...]
    layout: dict
    card: ModelCard
    created_at: int
    status: str = CANDIDATE
    effective_verdict: str | None = None

    def __post_init__(self):
        if self.effective_verdict is None:
            self.effective_verdict = self.card.validation.get("decision", "pending_manual")


class ModelRegistry:
    """Single-writer registry for one service."""

    def __init__(self, input_dim: int, path: str | Path | None = None):
        self.input_dim = input_dim
        self.path = Path(path) if path is not None else None
        self.records: list[dict] = []
        self.versions: dict[int, ModelVersion] = {}
        self.deployed_id: int | None = None
        self._archive_stack: list[int] = []
        self._clock = 0
        if self.path is not None and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    self._apply(json.loads(line), replay=True)

    # -- record plumbing ----------------------------------------------------

    def _append(self, record: dict) -> None:
        record = {"schema_version": 1, **record}
        self._apply(record, replay=False)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(canonical_json(record) + "\n")

    def _apply(self, record: dict, replay: bool) -> None:
        self.records.append(record)
        kind = record["kind"]
        if kind == "model_version":
            card = ModelCard.from_dict(record["model_card"])
            version = ModelVersion(
                version_id=record["version_id"],
                parent_id=record["parent_id"],
                params=tuple(record["params"]),
                layout=dict(record["layout"]),
                card=card,
                created_at=record["created_at"],
            )
            self.versions[version.version_id] = version
        elif kind == "status_change":
            version = self.versions[record["version_id"]]
            version.status = record["to"]
            if record["to"] == DEPLOYED:
                self.deployed_id = version.version_id
            elif self.deployed_id == version.version_id:
                self.deployed_id = None
            if replay:
                if record["to"] == DEPLOYED and version.version_id in self._archive_stack:
                    self._archive_stack.remove(version.version_id)
                elif record["to"] == ARCHIVED:
                    self._archive_stack.append(version.version_id)
        elif kind == "verdict_override":
            self.versions[record["version_id"]].effective_verdict = record["decision"]
        self._clock = max(self._clock, record.get("created_at", 0)) + 1

    def _now(self, created_at: int | None) -> int:
        return self._clock if created_at is None else created_at

    # -- operations ---------------------------------------------------------

    def register_version(
        self,
        params: Sequence[float],
        layout: dict,
        card: ModelCard,
        created_at: int | None = None,
    ) -> ModelVersion:
        """Append a new candidate version; prior records are untouched."""
        expected = layout_param_count(layout)
        if len(params) != expected:
            raise DimensionMismatch(
                f"params length {len(params)} does not match layout ({expected})"
            )
        if layout["input_dim"] != self.input_dim:
            raise DimensionMismatch(
                f"layout input_dim {layout['input_dim']} != service input_dim {self.input_dim}"
            )
        version_id = max(self.versions) + 1 if self.versions else 1
        self._append({
            "kind": "model_version",
            "version_id": version_id,
            "parent_id": self.deployed_id,
            "created_at": self._now(created_at),
            "params": [float(p) for p in params],
            "layout": dict(layout),
            "model_card": card.to_dict(),
        })
        return self.versions[version_id]

    def deploy(
        self,
        version_id: int,
        manual_override: bool = False,
        actor: str | None = None,
        created_at: int | None = None,
    ) -> ModelVersion:
        """Promote a validated candidate; the previous deployment is archived."""
        version = self.versions.get(version_id)
        if version is None:
            raise UnknownVersion(f"version {version_id} not found")
        if version.status == DEPLOYED:
            raise NotValidated(f"version {version_id} is already deployed")
        if not manual_override:
            if version.status != CANDIDATE:
                raise NotValidated(
                    f"version {version_id} has status {version.status}, expected candidate"
                )
            if version.effective_verdict != "accepted":
                raise NotValidated(
                    f"version {version_id} verdict is {version.effective_verdict}"
                )
        t = self._now(created_at)
        if version_id in self._archive_stack:
            self._archive_stack.remove(version_id)
        previous = self.deployed_id
        if previous is not None:
            self._append({
                "kind": "status_change", "version_id": previous,
                "from": DEPLOYED, "to": ARCHIVED, "created_at": t,
                "actor": actor, "manual_override": False,
            })
            self._archive_stack.append(previous)
        self._append({
            "kind": "status_change", "version_id": version_id,
            "from": version.status, "to": DEPLOYED, "created_at": t,
            "actor": actor, "manual_override": manual_override,
        })
        return version

    def reject(self, version_id: int, actor: str | None = None,
               created_at: int | None = None) -> ModelVersion:
        version = self.versions.get(version_id)
        if version is None:
            raise UnknownVersion(f"version {version_id} not found")
        self._append({
            "kind": "status_change", "version_id": version_id,
            "from": version.status, "to": REJECTED,
            "created_at": self._now(created_at), "actor": actor,
            "manual_override": False,
        })
        return version

    def override_verdict(self, version_id: int, decision: str, actor: str,
                         created_at: int | None = None) -> ModelVersion:
        version = self.versions.get(version_id)
        if version is None:
            raise UnknownVersion(f"version {version_id} not found")
        self._append({
            "kind": "verdict_override", "version_id": version_id,
            "decision": decision, "actor": actor,
            "created_at": self._now(created_at),
        })
        return version

    def rollback(self, actor: str | None = None,
                 created_at: int | None = None) -> ModelVersion:
        """Re-deploy the most recently archived deployment."""
        if not self._archive_stack or self.deployed_id is None:
            raise NothingToRollBack("no archived deployment to roll back to")
        t = self._now(created_at)
        current = self.deployed_id
        target = self._archive_stack.pop()
        self._append({
            "kind": "status_change", "version_id": current,
            "from": DEPLOYED, "to": ROLLED_BACK, "created_at": t,
            "actor": actor, "manual_override": False,
        })
        self._append({
            "kind": "status_change", "version_id": target,
            "from": ARCHIVED, "to": DEPLOYED, "created_at": t,
            "actor": actor, "manual_override": False,
        })
        return self.versions[target]

    # -- queries ------------------------------------------------------------

    @property
    def deployed(self) -> ModelVersion | None:
        return self.versions.get(self.deployed_id) if self.deployed_id is not None else None

    def get(self, version_id: int) -> ModelVersion:
        version = self.versions.get(version_id)
        if version is None:
            raise UnknownVersion(f"version {version_id} not found")
        return version

    def history(self) -> list[dict]:
        """Every version ever registered, deployed or not, id-ascending."""
        return [
            {
                "version_id": v.version_id,
                "status": v.status,
                "created_at": v.created_at,
                "scenario": v.card.scenario,
                "verdict": v.effective_verdict,
            }
            for v in sorted(self.versions.values(), key=lambda v: v.version_id)
        ]

    def projection(self) -> list[str]:
        """Canonical encoding of all written records, for append-only checks."""
        return [canonical_json(r) for r in self.records]

    def check_invariants(self) -> None:
        deployed = [v for v in self.versions.values() if v.status == DEPLOYED]
        assert len(deployed) <= 1, f"multiple deployed versions: {deployed}"
        ids = sorted(self.versions)
        assert ids == list(range(1, len(ids) + 1)), f"non-contiguous version ids: {ids}"
