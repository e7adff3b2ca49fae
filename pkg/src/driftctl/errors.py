"""Exception types shared across the control plane."""

from __future__ import annotations


class DriftctlError(Exception):
    """Base class for all library errors."""


class ConfigError(DriftctlError):
    """Service configuration is malformed or violates the schema.

    Carries the offending field path and, for syntax errors, the line number.
    """

    def __init__(self, reason: str, field: str | None = None, line: int | None = None):
        self.reason = reason
        self.field = field
        self.line = line
        parts = []
        if line is not None:
            parts.append(f"line {line}")
        if field is not None:
            parts.append(f"field {field!r}")
        suffix = f" ({', '.join(parts)})" if parts else ""
        super().__init__(f"{reason}{suffix}")


class DimensionMismatch(DriftctlError):
    pass


class EmptySample(DriftctlError):
    pass


class NonMonotoneIndex(DriftctlError):
    pass


class EmptyCache(DriftctlError):
    pass


class UnlabeledNewData(DriftctlError):
    pass


class MissingRecords(DriftctlError):
    def __init__(self, missing_ids):
        self.missing_ids = list(missing_ids)
        super().__init__(f"records not found: {self.missing_ids}")


class UnknownRecord(DriftctlError):
    pass


class InvalidRecord(DriftctlError):
    pass


class NotEnqueued(DriftctlError):
    pass


class UnlabeledBatch(DriftctlError):
    pass


class LengthMismatch(DriftctlError):
    pass


class EmptyData(DriftctlError):
    pass


class ManifestMismatch(DriftctlError):
    pass


class NumericalDivergence(DriftctlError):
    pass


class SingleTask(DriftctlError):
    pass


class EmptyList(DriftctlError):
    pass


class MissingTestSet(DriftctlError):
    pass


class OverlappingHoldout(DriftctlError):
    pass


class EmptyHoldout(DriftctlError):
    pass


class NoWorkers(DriftctlError):
    pass


class NotValidated(DriftctlError):
    pass


class UnknownVersion(DriftctlError):
    pass


class NothingToRollBack(DriftctlError):
    pass
