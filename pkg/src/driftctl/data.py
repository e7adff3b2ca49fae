"""Online request capture, bounded cache, rehearsal sampling, labeling queue.

The cache is a FIFO ring over served requests.  Evicted labeled records move
to an append-only archive so rehearsal never loses supervised history;
evicted unlabeled records are dropped.  Training sets are described by a
manifest (explicit record ids + seed + digest) so any run can be reproduced
bit-for-bit from the stores, and rendered as descriptive SQL for humans.
"""

from __future__ import annotations

import csv
import hashlib
import math
import random
from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    DimensionMismatch,
    EmptyCache,
    InvalidRecord,
    ManifestMismatch,
    MissingRecords,
    NonMonotoneIndex,
    NotEnqueued,
    UnknownRecord,
    UnlabeledNewData,
)
from .events import canonical_json

LABEL_SOURCES = ("online", "annotator", "none")

DEFAULT_CACHE_CAPACITY = 10_000


@dataclass(frozen=True)
class RequestRecord:
    """One served inference request; the unit of monitoring and rehearsal."""

    record_id: int
    arrival: int
    features: tuple[float, ...]
    prediction: int
    confidence: float
    label: int | None = None
    label_source: str = "none"

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "arrival": self.arrival,
            "features": list(self.features),
            "prediction": self.prediction,
            "confidence": self.confidence,
            "label": self.label,
            "label_source": self.label_source,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RequestRecord":
        return cls(
            record_id=raw["record_id"],
            arrival=raw["arrival"],
            features=tuple(float(v) for v in raw["features"]),
            prediction=raw["prediction"],
            confidence=raw["confidence"],
            label=raw.get("label"),
            label_source=raw.get("label_source", "none"),
        )


def _validate_record(record: RequestRecord, input_dim: int) -> None:
    if len(record.features) != input_dim:
        raise DimensionMismatch(
            f"record {record.record_id} has {len(record.features)} features, expected {input_dim}"
        )
    if not all(math.isfinite(v) for v in record.features):
        raise InvalidRecord(f"record {record.record_id} has non-finite features")
    if not 0.0 <= record.confidence <= 1.0:
        raise InvalidRecord(
            f"record {record.record_id} confidence {record.confidence} outside [0, 1]"
        )
    if record.label_source not in LABEL_SOURCES:
        raise InvalidRecord(f"unknown label_source {record.label_source!r}")
    if record.label is not None and record.label < 0:
        raise InvalidRecord(f"record {record.record_id} has negative label")
    if record.label is None and record.label_source != "none":
        raise InvalidRecord(f"record {record.record_id} has label_source but no label")


class ClCache:
    """Bounded FIFO record ring with labeled-eviction archive and class index."""

    def __init__(self, input_dim: int, capacity: int = DEFAULT_CACHE_CAPACITY,
                 archive_path: str | Path | None = None):
        if capacity < 1:
            raise InvalidRecord("capacity must be >= 1")
        self.input_dim = input_dim
        self.capacity = capacity
        self.archive_path = Path(archive_path) if archive_path is not None else None
        self._records: dict[int, RequestRecord] = {}
        self._buffer: deque[int] = deque()
        self._archive: list[int] = []
        self._by_class: dict[int, list[int]] = {}
        self._last_id = -1

    def __len__(self) -> int:
        return len(self._buffer)

    @property
    def archive_size(self) -> int:
        return len(self._archive)

    def next_record_id(self) -> int:
        return self._last_id + 1

    # -- ingestion ----------------------------------------------------------

    def collect(self, record: RequestRecord) -> int:
        _validate_record(record, self.input_dim)
        if record.record_id <= self._last_id:
            raise NonMonotoneIndex(
                f"record_id {record.record_id} not greater than last seen {self._last_id}"
            )
        self._last_id = record.record_id
        self._records[record.record_id] = record
        self._buffer.append(record.record_id)
        if record.label is not None:
            self._by_class.setdefault(record.label, []).append(record.record_id)
        if len(self._buffer) > self.capacity:
            self._evict_oldest()
        return record.record_id

    def _evict_oldest(self) -> None:
        evicted_id = self._buffer.popleft()
        record = self._records[evicted_id]
        if record.label is not None:
            self._archive.append(evicted_id)
            if self.archive_path is not None:
                with self.archive_path.open("a", encoding="utf-8") as fh:
                    fh.write(canonical_json(record.to_dict()) + "\n")
        else:
            del self._records[evicted_id]

    # -- reads --------------------------------------------------------------

    def get(self, record_id: int) -> RequestRecord:
        record = self._records.get(record_id)
        if record is None:
            raise UnknownRecord(f"record {record_id} not in cache or archive")
        return record

    def has(self, record_id: int) -> bool:
        return record_id in self._records

    def snapshot_window(self, n: int) -> tuple[RequestRecord, ...]:
        """Immutable copy of the most recent min(n, len) buffered records."""
        if not self._buffer:
            raise EmptyCache("cache is empty")
        ids = list(self._buffer)[-n:] if n < len(self._buffer) else list(self._buffer)
        return tuple(self._records[i] for i in ids)

    def labeled_records(self) -> list[RequestRecord]:
        """All labeled records, archive first then buffer, id-ascending."""
        ids = self._archive + [i for i in self._buffer if self._records[i].label is not None]
        return [self._records[i] for i in sorted(set(ids))]

    def labeled_count(self) -> int:
        return sum(len(ids) for ids in self._by_class.values())

    def class_counts(self) -> dict[int, int]:
        return {c: len(ids) for c, ids in sorted(self._by_class.items())}

    # -- labeling -----------------------------------------------------------

    def attach_label(self, record_id: int, label: int, source: str) -> RequestRecord:
        record = self.get(record_id)
        if record.label is not None:
            raise NotEnqueued(f"record {record_id} already labeled; labels are write-once")
        if label < 0:
            raise InvalidRecord(f"negative label {label}")
        updated = replace(record, label=label, label_source=source)
        self._records[record_id] = updated
        self._by_class.setdefault(label, []).append(record_id)
        return updated


class LabelQueue:
    """Holds record ids awaiting a human label; labels are write-once."""

    def __init__(self, cache: ClCache):
        self.cache = cache
        self._pending: dict[int, None] = {}

    def __len__(self) -> int:
        return len(self._pending)

    @property
    def pending_ids(self) -> list[int]:
        return list(self._pending)

    def enqueue_label(self, record_id: int) -> None:
        if not self.cache.has(record_id):
            raise UnknownRecord(f"record {record_id} not in cache or archive")
        self._pending[record_id] = None

    def provide_label(self, record_id: int, label: int) -> RequestRecord:
        if record_id not in self._pending:
            raise NotEnqueued(f"record {record_id} was not enqueued for labeling")
        updated = self.cache.attach_label(record_id, label, "annotator")
        del self._pending[record_id]
        return updated


# -- manifests ----------------------------------------------------------------


@dataclass(frozen=True)
class DataManifest:
    """Reproducible description of one training set: ids, seed, digest."""

    manifest_id: str
    time_range: tuple[int, int]
    class_filter: tuple[int, ...]
    record_ids: tuple[int, ...]
    seed: int
    new_count: int
    rehearsal_count: int
    shortfall: int
    content_digest: str

    def to_dict(self) -> dict:
        return {
            "manifest_id": self.manifest_id,
            "selection": {
                "time_range": list(self.time_range),
                "class_filter": list(self.class_filter),
                "record_ids": list(self.record_ids),
                "seed": self.seed,
                "shortfall": self.shortfall,
            },
            "counts": {"new": self.new_count, "rehearsal": self.rehearsal_count},
            "content_digest": self.content_digest,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "DataManifest":
        sel = raw["selection"]
        return cls(
            manifest_id=raw["manifest_id"],
            time_range=tuple(sel["time_range"]),
            class_filter=tuple(sel["class_filter"]),
            record_ids=tuple(sel["record_ids"]),
            seed=sel["seed"],
            new_count=raw["counts"]["new"],
            rehearsal_count=raw["counts"]["rehearsal"],
            shortfall=sel.get("shortfall", 0),
            content_digest=raw["content_digest"],
        )


def ids_digest(record_ids: Sequence[int]) -> str:
    return hashlib.sha256(canonical_json(list(record_ids)).encode("utf-8")).hexdigest()


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _allocate_stratified(counts: dict[int, int], k: int) -> dict[int, int]:
    """Split k across classes proportionally to counts, largest remainder."""
    total = sum(counts.values())
    if total == 0 or k == 0:
        return {c: 0 for c in counts}
    quotas = {c: k * n / total for c, n in counts.items()}
    alloc = {c: min(int(q), counts[c]) for c, q in quotas.items()}
    # hand out the remainder by descending fractional part, cap at class size
    while sum(alloc.values()) < min(k, total):
        leftovers = sorted(
            (c for c in counts if alloc[c] < counts[c]),
            key=lambda c: (-(quotas[c] - int(quotas[c])), c),
        )
        if not leftovers:
            break
        for c in leftovers:
            if sum(alloc.values()) >= min(k, total):
                break
            if alloc[c] < counts[c]:
                alloc[c] += 1
    return alloc


def sample_rehearsal(
    cache: ClCache,
    new_records: Sequence[RequestRecord],
    ratio: float,
    seed: int,
    exclude_ids: set[int] | None = None,
) -> tuple[list[RequestRecord], DataManifest]:
    """Mix new labeled records with a seeded stratified sample of history.

    The rehearsal count k solves k/(k+new) = ratio, i.e.
    k = round(ratio*new/(1-ratio)).  History is every labeled record in the
    stores outside the new batch (and outside exclude_ids, which callers use
    to keep held-out validation records away from training); if it holds
    fewer than k records the whole pool is taken and the manifest notes the
    shortfall.
    """
    if not 0.0 <= ratio <= 1.0:
        raise InvalidRecord(f"rehearsal ratio {ratio} outside [0, 1]")
    for record in new_records:
        if record.label is None:
            raise UnlabeledNewData(f"record {record.record_id} has no label")

    skip = {r.record_id for r in new_records}
    if exclude_ids is not None:
        skip |= set(exclude_ids)
    pool = [r for r in cache.labeled_records() if r.record_id not in skip]

    if ratio >= 1.0:
        k = len(pool)
    else:
        k = _round_half_up(ratio * len(new_records) / (1.0 - ratio))
    shortfall = max(0, k - len(pool))

    by_class: dict[int, list[RequestRecord]] = {}
    for record in pool:
        by_class.setdefault(record.label, []).append(record)
    counts = {c: len(rs) for c, rs in sorted(by_class.items())}
    alloc = _allocate_stratified(counts, k)

    rng = random.Random(seed)
    rehearsal: list[RequestRecord] = []
    for c in sorted(alloc):
        members = sorted(by_class[c], key=lambda r: r.record_id)
        rehearsal.extend(rng.sample(members, alloc[c]))
    rehearsal.sort(key=lambda r: r.record_id)

    training = list(new_records) + rehearsal
    ids = tuple(r.record_id for r in training)
    arrivals = [r.arrival for r in training]
    t0, t1 = (min(arrivals), max(arrivals) + 1) if arrivals else (0, 0)
    digest = ids_digest(ids)
    manifest = DataManifest(
        manifest_id=f"m-{digest[:12]}",
        time_range=(t0, t1),
        class_filter=tuple(sorted({r.label for r in training})),
        record_ids=ids,
        seed=seed,
        new_count=len(new_records),
        rehearsal_count=len(rehearsal),
        shortfall=shortfall,
        content_digest=digest,
    )
    return training, manifest


def materialize(manifest: DataManifest, cache: ClCache) -> list[RequestRecord]:
    """Re-fetch the exact training set a manifest describes."""
    missing = [i for i in manifest.record_ids if not cache.has(i)]
    if missing:
        raise MissingRecords(missing)
    records = [cache.get(i) for i in manifest.record_ids]
    digest = ids_digest([r.record_id for r in records])
    if digest != manifest.content_digest:
        raise ManifestMismatch(
            f"materialized digest {digest} != manifest digest {manifest.content_digest}"
        )
    return records


def render_query(manifest: DataManifest) -> str:
    """Descriptive ANSI SQL for the manifest's selection (documentation only).

    Virtual schema: records(record_id, arrival, features..., prediction,
    confidence, label).  Same manifest always renders byte-identical text.
    """
    t0, t1 = manifest.time_range
    clauses = [f"arrival >= {t0}", f"arrival < {t1}"]
    if manifest.class_filter:
        clauses.append("label IN (" + ",".join(str(c) for c in manifest.class_filter) + ")")
    if manifest.record_ids:
        clauses.append(
            "record_id IN (" + ",".join(str(i) for i in manifest.record_ids) + ")"
        )
    return "SELECT * FROM records WHERE " + " AND ".join(clauses) + " ORDER BY record_id;"


# -- dataset files -------------------------------------------------------------


def read_dataset_csv(path: str | Path) -> tuple[list[tuple[float, ...]], list[int]]:
    """Read `feature_0..feature_{d-1},label` rows into feature/label lists."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InvalidRecord(f"{path}: empty dataset file")
        dim = len(header) - 1
        expected = [f"feature_{i}" for i in range(dim)] + ["label"]
        if header != expected:
            raise InvalidRecord(f"{path}: bad header {header!r}")
        features: list[tuple[float, ...]] = []
        labels: list[int] = []
        for row in reader:
            if len(row) != dim + 1:
                raise InvalidRecord(f"{path}: row has {len(row)} columns, expected {dim + 1}")
            features.append(tuple(float(v) for v in row[:dim]))
            labels.append(int(row[dim]))
    return features, labels


def write_dataset_csv(path: str | Path, features: Iterable[Sequence[float]],
                      labels: Iterable[int]) -> None:
    # repr(float(v)) is the shortest string that parses back bit-exactly,
    # and the float() coercion keeps numpy scalars out of the file
    features = [tuple(float(v) for v in f) for f in features]
    labels = [int(lab) for lab in labels]
    if len(features) != len(labels):
        raise InvalidRecord("features and labels differ in length")
    dim = len(features[0]) if features else 0
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"feature_{i}" for i in range(dim)] + ["label"])
        for feat, lab in zip(features, labels):
            writer.writerow([repr(v) for v in feat] + [lab])
