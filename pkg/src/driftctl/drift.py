"""Drift detection over the live request stream.

Two detectors run side by side: a two-sample Kolmogorov-Smirnov test on each
feature marginal plus the confidence-score marginal (distribution drift),
and EDDM on the error stream (performance drift).  A window evaluation folds
both into a single DriftReport whose magnitude is max(1 - p) over the tested
marginals, Bonferroni-corrected for the number of marginals.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .config import DriftPolicy
from .data import RequestRecord
from .errors import DimensionMismatch, EmptySample, NonMonotoneIndex

STABLE = "Stable"
WARNING = "Warning"
DRIFT = "Drift"

# canonical EDDM ratio thresholds: warn below alpha, drift below beta
EDDM_ALPHA = 0.95
EDDM_BETA = 0.90
# sampling-error allowance on the drift comparison (in standard errors of
# the distance statistic); keeps estimator noise from impersonating drift
EDDM_DRIFT_GUARD_Z = 3.0

# two-sample KS p-values are never exactly zero; flooring keeps the drift
# magnitude strictly below 1 so the offline-scenario override stays opt-in
MIN_P_VALUE = 1e-12


@dataclass(frozen=True)
class KSResult:
    statistic_d: float
    p_value: float
    n: int
    m: int

    def to_dict(self) -> dict:
        return {
            "statistic_d": self.statistic_d,
            "p_value": self.p_value,
            "n": self.n,
            "m": self.m,
        }


def ks_statistic(sample_a: Sequence[float], sample_b: Sequence[float]) -> float:
    """D = sup over x of |ECDF_a(x) - ECDF_b(x)|, over the pooled points."""
    if len(sample_a) == 0 or len(sample_b) == 0:
        raise EmptySample("both samples must be non-empty")
    a = np.sort(np.asarray(sample_a, dtype=np.float64))
    b = np.sort(np.asarray(sample_b, dtype=np.float64))
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise EmptySample("samples must contain only finite values")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def ks_p_value(d: float, n: int, m: int) -> float:
    """Asymptotic two-sided p for the two-sample statistic.

    Uses the effective size n*m/(n+m) with the small-sample lambda
    correction, then the alternating series 2*sum((-1)^(k-1)*exp(-2k^2 L^2))
    truncated at term < 1e-10 or k = 100.  Result clamped to
    [MIN_P_VALUE, 1].
    """
    if n < 1 or m < 1:
        raise EmptySample("sample sizes must be >= 1")
    if d <= 0.0:
        return 1.0
    n_e = n * m / (n + m)
    lam = (math.sqrt(n_e) + 0.12 + 0.11 / math.sqrt(n_e)) * d
    total = 0.0
    for k in range(1, 101):
        term = 2.0 * (-1.0) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam)
        total += term
        if abs(term) < 1e-10:
            break
    return min(1.0, max(total, MIN_P_VALUE))


def ks_test(sample_a: Sequence[float], sample_b: Sequence[float]) -> KSResult:
    d = ks_statistic(sample_a, sample_b)
    return KSResult(
        statistic_d=d,
        p_value=ks_p_value(d, len(sample_a), len(sample_b)),
        n=len(sample_a),
        m=len(sample_b),
    )


# -- EDDM -----------------------------------------------------------------------


@dataclass(frozen=True)
class EddmState:
    """Running statistics over distances between consecutive errors.

    mean_distance/m2 are Welford accumulators; peak records the largest
    mean + 2*std seen in the current episode.  A Drift signal resets the
    episode (counters and peak cleared, stream position kept).
    """

    warmup_min_errors: int = 30
    error_count: int = 0
    last_error_index: int | None = None
    distance_count: int = 0
    mean_distance: float = 0.0
    m2: float = 0.0
    peak: float = 0.0
    last_index: int | None = None
    level: str = STABLE

    @property
    def std_distance(self) -> float:
        if self.distance_count == 0:
            return 0.0
        return math.sqrt(self.m2 / self.distance_count)


def eddm_update(state: EddmState, is_error: bool, index: int) -> tuple[EddmState, str]:
    """Fold one prediction outcome into the detector.

    Non-errors only advance the stream position.  Errors update the distance
    statistics; after warmup the ratio (mean + 2*std)/peak is compared to
    the Warning/Drift thresholds.  Drift returns a fresh episode state.
    """
    if state.last_index is not None and index <= state.last_index:
        raise NonMonotoneIndex(f"index {index} not greater than {state.last_index}")
    if not is_error:
        state = replace(state, last_index=index)
        return state, state.level

    error_count = state.error_count + 1
    if state.last_error_index is None:
        state = replace(
            state, error_count=error_count, last_error_index=index,
            last_index=index, level=STABLE,
        )
        return state, state.level

    distance = float(index - state.last_error_index)
    count = state.distance_count + 1
    delta = distance - state.mean_distance
    mean = state.mean_distance + delta / count
    m2 = state.m2 + delta * (distance - mean)
    std = math.sqrt(m2 / count)
    current = mean + 2.0 * std
    # the peak only ratchets once the estimate has stabilized; an early
    # noisy high would otherwise become an unbeatable baseline that turns
    # plain estimator convergence into a phantom drift
    peak = state.peak
    if error_count >= state.warmup_min_errors:
        peak = max(peak, current)

    level = STABLE
    if error_count >= state.warmup_min_errors and peak > 0.0:
        ratio = current / peak
        # Drift demands the drop survive a 3-sigma allowance for the
        # statistic's own sampling error; Warning stays a plain ratio test
        stderr = std * math.sqrt(1.0 / count + 2.0 / max(count - 1, 1))
        if (current + EDDM_DRIFT_GUARD_Z * stderr) / peak < EDDM_BETA:
            level = DRIFT
        elif ratio < EDDM_ALPHA:
            level = WARNING

    if level == DRIFT:
        fresh = EddmState(warmup_min_errors=state.warmup_min_errors, last_index=index)
        return fresh, DRIFT

    state = EddmState(
        warmup_min_errors=state.warmup_min_errors,
        error_count=error_count,
        last_error_index=index,
        distance_count=count,
        mean_distance=mean,
        m2=m2,
        peak=peak,
        last_index=index,
        level=level,
    )
    return state, level


def is_proxy_error(record: RequestRecord) -> bool:
    """Error signal for EDDM: wrong label when known, low confidence otherwise."""
    if record.label is not None:
        return record.prediction != record.label
    return record.confidence < 0.5


# -- window evaluation ------------------------------------------------------------


@dataclass(frozen=True)
class DriftReport:
    window_id: int
    magnitude: float
    per_feature_ks: tuple[KSResult, ...]
    eddm_level: str
    new_class_fraction: float
    triggered: bool

    def to_dict(self) -> dict:
        return {
            "window_id": self.window_id,
            "magnitude": self.magnitude,
            "per_feature_ks": [r.to_dict() for r in self.per_feature_ks],
            "eddm_level": self.eddm_level,
            "new_class_fraction": self.new_class_fraction,
            "triggered": self.triggered,
        }


def new_class_fraction(
    window: Sequence[RequestRecord], known_classes: set[int] | None
) -> float:
    """Share of labeled window records whose label the deployed model lacks."""
    if known_classes is None:
        return 0.0
    labeled = [r for r in window if r.label is not None]
    if not labeled:
        return 0.0
    outside = sum(1 for r in labeled if r.label not in known_classes)
    return outside / len(labeled)


def evaluate_window(
    reference: Sequence[RequestRecord],
    current: Sequence[RequestRecord],
    policy: DriftPolicy,
    *,
    known_classes: set[int] | None = None,
    eddm_level: str = STABLE,
    window_id: int = 0,
) -> DriftReport:
    """Score one monitoring window against the reference window.

    Runs KS per feature marginal plus the confidence marginal; each p-value
    is compared to magnitude_threshold/(F+1) so the window-level false
    trigger rate stays near the configured threshold.
    """
    if len(reference) == 0 or len(current) == 0:
        raise EmptySample("reference and current windows must be non-empty")
    dim = len(reference[0].features)
    for rec in (*reference, *current):
        if len(rec.features) != dim:
            raise DimensionMismatch(
                f"record {rec.record_id} has {len(rec.features)} features, expected {dim}"
            )

    ref_cols = [[r.features[f] for r in reference] for f in range(dim)]
    cur_cols = [[r.features[f] for r in current] for f in range(dim)]
    ref_cols.append([r.confidence for r in reference])
    cur_cols.append([r.confidence for r in current])

    results = tuple(ks_test(rc, cc) for rc, cc in zip(ref_cols, cur_cols))
    magnitude = max(1.0 - r.p_value for r in results)
    corrected = policy.magnitude_threshold / len(results)
    ks_fired = "ks" in policy.detectors and magnitude >= 1.0 - corrected
    eddm_fired = "eddm" in policy.detectors and eddm_level == DRIFT

    return DriftReport(
        window_id=window_id,
        magnitude=magnitude,
        per_feature_ks=results,
        eddm_level=eddm_level,
        new_class_fraction=new_class_fraction(current, known_classes),
        triggered=ks_fired or eddm_fired,
    )


class DriftMonitor:
    """Stateful wrapper the serving loop feeds one record at a time.

    Holds the reference window, the rolling current window, and the EDDM
    state; every check_interval records it emits a DriftReport.
    """

    def __init__(self, policy: DriftPolicy, known_classes: set[int] | None = None):
        self.policy = policy
        self.known_classes = set(known_classes) if known_classes is not None else None
        self.reference: tuple[RequestRecord, ...] = ()
        self.window: deque[RequestRecord] = deque(maxlen=policy.window_size)
        self.eddm = EddmState(warmup_min_errors=policy.min_errors_warmup)
        self._since_check = 0
        self._next_window_id = 1
        self._eddm_drift_pending = False

    def set_reference(self, records: Sequence[RequestRecord]) -> None:
        """Pin the comparison window; restarts window accumulation."""
        self.reference = tuple(records)
        self.window.clear()
        self._since_check = 0

    def reset_after_deploy(self, reference: Sequence[RequestRecord],
                           known_classes: set[int] | None = None) -> None:
        """New model online: fresh reference, fresh EDDM, fresh window."""
        self.reference = tuple(reference)
        if known_classes is not None:
            self.known_classes = set(known_classes)
        self.window.clear()
        self.eddm = EddmState(warmup_min_errors=self.policy.min_errors_warmup)
        self._since_check = 0
        self._eddm_drift_pending = False

    def observe(self, record: RequestRecord) -> DriftReport | None:
        """Feed one served request; returns a report on check boundaries."""
        if "eddm" in self.policy.detectors:
            self.eddm, level = eddm_update(self.eddm, is_proxy_error(record), record.record_id)
            if level == DRIFT:
                # the update resets the episode, so hold the signal until
                # the next report carries it out
                self._eddm_drift_pending = True
        self.window.append(record)
        self._since_check += 1
        if self._since_check < self.policy.check_interval or not self.reference:
            return None
        if len(self.window) < self.policy.window_size:
            return None
        self._since_check = 0
        eddm_level = DRIFT if self._eddm_drift_pending else self.eddm.level
        report = evaluate_window(
            self.reference,
            tuple(self.window),
            self.policy,
            known_classes=self.known_classes,
            eddm_level=eddm_level,
            window_id=self._next_window_id,
        )
        self._eddm_drift_pending = False
        self._next_window_id += 1
        return report
