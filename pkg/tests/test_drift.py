"""Detector correctness: KS against brute-force oracles, EDDM stream behavior,
windowed evaluation and trigger composition."""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from driftctl import (
    DimensionMismatch,
    DriftMonitor,
    DriftPolicy,
    EddmState,
    EmptySample,
    NonMonotoneIndex,
    RequestRecord,
    eddm_update,
    evaluate_window,
    ks_p_value,
    ks_statistic,
    ks_test,
)
from driftctl.drift import new_class_fraction

from conftest import make_records


def brute_force_ks(a, b) -> float:
    """O(n*m) oracle: max ECDF gap over every pooled evaluation point."""
    best = 0.0
    for t in list(a) + list(b):
        fa = sum(1 for v in a if v <= t) / len(a)
        fb = sum(1 for v in b if v <= t) / len(b)
        best = max(best, abs(fa - fb))
    return best


class TestKsStatistic:
    def test_matches_brute_force_on_1000_random_pairs(self):
        rng = np.random.default_rng(99)
        started = time.perf_counter()
        for _ in range(1000):
            n = int(rng.integers(1, 51))
            m = int(rng.integers(1, 51))
            kind = rng.integers(0, 3)
            if kind == 0:
                a = rng.normal(0, 1, n)
                b = rng.normal(rng.uniform(-2, 2), 1, m)
            elif kind == 1:
                a = rng.integers(0, 5, n).astype(float)  # heavy ties
                b = rng.integers(0, 5, m).astype(float)
            else:
                a = rng.uniform(0, 1, n)
                b = np.concatenate([a[: min(n, m)], rng.uniform(0, 1, max(0, m - n))])[:m]
            d = ks_statistic(a, b)
            assert d == pytest.approx(brute_force_ks(a, b), abs=1e-12)
        elapsed = time.perf_counter() - started
        assert elapsed < 5.0, f"oracle sweep took {elapsed:.2f}s"

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            a = rng.normal(0, 1, int(rng.integers(1, 40)))
            b = rng.normal(1, 2, int(rng.integers(1, 40)))
            d = ks_statistic(a, b)
            assert d == ks_statistic(b, a)
            assert 0.0 <= d <= 1.0

    def test_identical_samples_give_zero(self):
        a = [0.5, 1.0, -2.0, 0.5]
        assert ks_statistic(a, list(a)) == 0.0

    def test_disjoint_samples_give_one(self):
        assert ks_statistic([0.0, 1.0, 2.0], [10.0, 11.0]) == 1.0

    def test_empty_sample_rejected(self):
        with pytest.raises(EmptySample):
            ks_statistic([], [1.0])
        with pytest.raises(EmptySample):
            ks_statistic([1.0], [])


class TestKsPValue:
    def test_monotone_decreasing_in_d(self):
        ds = np.linspace(0.01, 0.99, 50)
        ps = [ks_p_value(d, 100, 100) for d in ds]
        assert all(p1 >= p2 for p1, p2 in zip(ps, ps[1:]))

    def test_bounds_and_floor(self):
        assert 0.0 < ks_p_value(0.9, 500, 500) <= 1.0
        assert ks_p_value(0.0, 100, 100) == 1.0
        assert ks_p_value(1.0, 10_000, 10_000) >= 1e-12, "p is floored, never 0"

    def test_matches_monte_carlo_null_distribution(self):
        """Independent oracle: estimate P(D >= d) under the null by direct
        simulation at n = m = 100 and compare to the asymptotic formula."""
        rng = np.random.default_rng(2024)
        n = m = 100
        reps = 1500
        stats = np.empty(reps)
        for i in range(reps):
            a = rng.standard_normal(n)
            b = rng.standard_normal(m)
            stats[i] = ks_statistic(a, b)
        for d in (0.15, 0.19, 0.23):
            simulated = float(np.mean(stats >= d - 1e-12))
            asymptotic = ks_p_value(d, n, m)
            assert simulated == pytest.approx(asymptotic, abs=0.03), (
                f"d={d}: simulated {simulated:.4f} vs asymptotic {asymptotic:.4f}"
            )

    def test_agrees_with_scipy_asymptotic_for_moderate_d(self):
        scipy_stats = pytest.importorskip("scipy.stats")
        rng = np.random.default_rng(11)
        for _ in range(25):
            a = rng.normal(0, 1, 300)
            b = rng.normal(0.15, 1, 300)
            result = ks_test(a, b)
            reference = scipy_stats.ks_2samp(a, b, method="asymp")
            assert result.statistic_d == pytest.approx(reference.statistic, abs=1e-12)
            # formulas differ by a small-sample correction term, so the
            # comparison is loose rather than exact
            assert result.p_value == pytest.approx(reference.pvalue, rel=0.2, abs=0.02)


class TestEddm:
    def test_stable_before_warmup(self):
        state = EddmState(warmup_min_errors=30)
        rng = np.random.default_rng(0)
        for i in range(2000):
            state, level = eddm_update(state, bool(rng.random() < 0.2), i)
            if state.error_count < 30:
                assert level == "Stable"

    def test_peak_only_ratchets_after_warmup(self):
        state = EddmState(warmup_min_errors=5)
        # widely spaced early errors would set an unbeatable peak if the
        # ratchet were active from the first distance
        for i in (0, 100, 200, 300):
            state, _ = eddm_update(state, True, i)
        assert state.error_count == 4
        assert state.peak == 0.0, "peak must not form from pre-warmup noise"
        state, _ = eddm_update(state, True, 400)
        assert state.error_count == 5
        assert state.peak > 0.0, "warmup-th error starts the ratchet"

    def test_non_monotone_index_rejected(self):
        state = EddmState()
        state, _ = eddm_update(state, True, 10)
        with pytest.raises(NonMonotoneIndex):
            eddm_update(state, True, 9)

    def test_step_stream_fires_within_500(self):
        for seed in (1, 7, 23):
            rng = np.random.default_rng(seed)
            state = EddmState(warmup_min_errors=30)
            fired_at = None
            for i in range(10_000):
                rate = 0.05 if i < 3000 else 0.5
                state, level = eddm_update(state, bool(rng.random() < rate), i)
                if level == "Drift" and i >= 3000:
                    fired_at = i
                    break
            assert fired_at is not None and fired_at <= 3500, (
                f"seed {seed}: drift at {fired_at}"
            )

    def test_stationary_stream_never_fires(self):
        for seed in (1, 7, 23):
            rng = np.random.default_rng(seed)
            state = EddmState(warmup_min_errors=30)
            for i in range(10_000):
                state, level = eddm_update(state, bool(rng.random() < 0.01), i)
                assert level != "Drift", f"seed {seed}: phantom drift at {i}"

    def test_drift_resets_state_but_keeps_position(self):
        rng = np.random.default_rng(1)
        state = EddmState(warmup_min_errors=30)
        for i in range(10_000):
            rate = 0.05 if i < 3000 else 0.5
            state, level = eddm_update(state, bool(rng.random() < rate), i)
            if level == "Drift":
                assert state.error_count == 0
                assert state.peak == 0.0
                assert state.last_index == i
                break
        else:
            pytest.fail("no drift fired")


def record_at(i: int, features, prediction=0, confidence=0.9, label=None) -> RequestRecord:
    return RequestRecord(
        record_id=i,
        arrival=i,
        features=tuple(float(f) for f in features),
        prediction=prediction,
        confidence=confidence,
        label=label,
    )


class TestEvaluateWindow:
    def test_magnitude_is_max_over_feature_and_confidence_channels(self):
        rng = np.random.default_rng(3)
        reference = [
            record_at(i, rng.normal(0, 1, 3), confidence=float(rng.uniform(0.8, 1)))
            for i in range(200)
        ]
        shifted = [
            record_at(200 + i, rng.normal((4, 0, 0), 1), confidence=float(rng.uniform(0.8, 1)))
            for i in range(200)
        ]
        policy = DriftPolicy(window_size=200, check_interval=100)
        report = evaluate_window(reference, shifted, policy)
        assert len(report.per_feature_ks) == 4, "3 features + confidence channel"
        assert report.magnitude == pytest.approx(
            max(1.0 - ks.p_value for ks in report.per_feature_ks)
        )
        assert report.triggered

    def test_bonferroni_trigger_threshold(self):
        rng = np.random.default_rng(4)
        reference = [record_at(i, rng.normal(0, 1, 2)) for i in range(300)]
        current = [record_at(300 + i, rng.normal(0, 1, 2)) for i in range(300)]
        policy = DriftPolicy(window_size=300, magnitude_threshold=0.05)
        report = evaluate_window(reference, current, policy)
        channels = 3  # 2 features + confidence
        threshold = 1.0 - policy.magnitude_threshold / channels
        assert report.triggered == (report.magnitude >= threshold)

    def test_eddm_drift_alone_triggers(self):
        rng = np.random.default_rng(5)
        reference = [record_at(i, rng.normal(0, 1, 2)) for i in range(100)]
        current = [record_at(100 + i, rng.normal(0, 1, 2)) for i in range(100)]
        policy = DriftPolicy(window_size=100)
        quiet = evaluate_window(reference, current, policy, eddm_level="Stable")
        noisy = evaluate_window(reference, current, policy, eddm_level="Drift")
        assert not quiet.triggered
        assert noisy.triggered

    def test_dimension_mismatch_rejected(self):
        reference = [record_at(0, (0.0, 1.0))]
        current = [record_at(1, (0.0, 1.0, 2.0))]
        with pytest.raises(DimensionMismatch):
            evaluate_window(reference, current, DriftPolicy())

    def test_new_class_fraction(self):
        window = [record_at(i, (0.0,), label=(2 if i < 30 else 0)) for i in range(100)]
        assert new_class_fraction(window, known_classes={0, 1}) == pytest.approx(0.3)
        assert new_class_fraction(window, known_classes=None) == 0.0
        assert new_class_fraction([], known_classes={0}) == 0.0


class TestDriftMonitor:
    def test_reports_every_check_interval_once_reference_set(self):
        policy = DriftPolicy(window_size=50, check_interval=25)
        monitor = DriftMonitor(policy, known_classes={0, 1})
        rng = np.random.default_rng(6)
        reference = [record_at(i, rng.normal(0, 1, 2)) for i in range(50)]
        monitor.set_reference(reference)
        reports = []
        for i in range(50, 250):
            report = monitor.observe(record_at(i, rng.normal(0, 1, 2)))
            if report is not None:
                reports.append((i, report))
        # a full window must accumulate first, then one report per interval
        assert [i for i, _ in reports] == [99 + 25 * k for k in range(7)]
        assert all(not r.triggered for _, r in reports)

    def test_shifted_stream_triggers(self):
        policy = DriftPolicy(window_size=50, check_interval=25)
        monitor = DriftMonitor(policy, known_classes={0, 1})
        rng = np.random.default_rng(7)
        monitor.set_reference([record_at(i, rng.normal(0, 1, 2)) for i in range(50)])
        triggered = False
        for i in range(50, 200):
            report = monitor.observe(record_at(i, rng.normal((3.5, 0), 1, 2)))
            if report is not None and report.triggered:
                triggered = True
                break
        assert triggered

    def test_reset_after_deploy_clears_reference_and_window(self):
        policy = DriftPolicy(window_size=20, check_interval=10)
        monitor = DriftMonitor(policy, known_classes={0, 1})
        rng = np.random.default_rng(8)
        monitor.set_reference([record_at(i, rng.normal(0, 1, 2)) for i in range(20)])
        for i in range(20, 40):
            monitor.observe(record_at(i, rng.normal(0, 1, 2)))
        monitor.reset_after_deploy((), known_classes={0, 1, 2})
        assert monitor.reference == ()
        assert len(monitor.window) == 0
        assert monitor.known_classes == {0, 1, 2}
        # no reference -> silent observation
        for i in range(40, 80):
            assert monitor.observe(record_at(i, rng.normal(5, 1, 2))) is None
