"""CL profiling metrics and the deployment validation gate.

The profiler fills a lower-triangular accuracy matrix (checkpoint i scored
on every task j <= i) and derives backward transfer plus relative size and
compute efficiency.  The validator gates a candidate model on held-out
labeled data: absolute accuracy floor, bounded regression against the
incumbent, and a two-proportion z-test over seeded A/B arms that rejects
only significant degradation.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import CLPolicy, ValidationPolicy
from .data import DataManifest, RequestRecord
from .errors import (
    EmptyHoldout,
    EmptyList,
    MissingTestSet,
    OverlappingHoldout,
    SingleTask,
)
from .learner import (
    EwcAnchor,
    Model,
    ParamLayout,
    SiState,
    _batch_forward,
    expand_for_labels,
    expand_si_state,
    expansion_mask,
    fisher_diag,
    fit,
    si_consolidate,
)
from . import synth

ACCEPTED = "accepted"
REJECTED = "rejected"
PENDING_MANUAL = "pending_manual"

# below this arm size the normal approximation is not trusted
MIN_ARM_SIZE = 30


def accuracy(model: Model, x: np.ndarray, y: np.ndarray) -> float:
    """Fraction of rows whose argmax class matches the label."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape[0] == 0:
        raise EmptyList("no rows to score")
    probs, _ = _batch_forward(model, x)
    return float(np.mean(np.argmax(probs, axis=1) == y))


def records_accuracy(model: Model, records: Sequence[RequestRecord]) -> float:
    labeled = [r for r in records if r.label is not None]
    if not labeled:
        raise EmptyList("no labeled records to score")
    x = np.asarray([r.features for r in labeled])
    y = np.asarray([r.label for r in labeled])
    return accuracy(model, x, y)


# -- metrics ------------------------------------------------------------------------


def bwt(acc_matrix: Sequence[Sequence[float]]) -> float:
    """Mean change on earlier tasks after training through the last task.

    Row i scores the checkpoint after task i on tasks 0..i, so forgetting
    shows up as final-row entries below the diagonal.
    """
    t = len(acc_matrix)
    if t < 2:
        raise SingleTask("backward transfer needs at least two tasks")
    last = acc_matrix[t - 1]
    return float(sum(last[i] - acc_matrix[i][i] for i in range(t - 1)) / (t - 1))


def ms_efficiency(sizes: Sequence[int]) -> float:
    """Relative model growth: min(1, mean(size_1/size_i))."""
    if not sizes:
        raise EmptyList("no checkpoint sizes")
    if any(s <= 0 for s in sizes):
        raise EmptyList("sizes must be positive")
    return min(1.0, sum(sizes[0] / s for s in sizes) / len(sizes))


def ce_efficiency(step_counts: Sequence[int]) -> float:
    """Relative training cost: min(1, mean(steps_1/steps_i))."""
    if not step_counts:
        raise EmptyList("no step counts")
    if any(s <= 0 for s in step_counts):
        raise EmptyList("step counts must be positive")
    return min(1.0, sum(step_counts[0] / s for s in step_counts) / len(step_counts))


@dataclass(frozen=True)
class TaskSet:
    """One task's train/test split."""

    name: str
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray


@dataclass(frozen=True)
class MetricReport:
    """Profiler output; bwt is None for single-task lineages."""

    acc_matrix: tuple[tuple[float, ...], ...]
    bwt: float | None
    final_acc: float
    ms_efficiency: float
    ce_efficiency: float
    wall_clock_per_task: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "acc_matrix": [list(row) for row in self.acc_matrix],
            "bwt": self.bwt,
            "final_acc": self.final_acc,
            "ms_efficiency": self.ms_efficiency,
            "ce_efficiency": self.ce_efficiency,
            "wall_clock_per_task": list(self.wall_clock_per_task),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "MetricReport":
        return cls(
            acc_matrix=tuple(tuple(row) for row in raw["acc_matrix"]),
            bwt=raw["bwt"],
            final_acc=raw["final_acc"],
            ms_efficiency=raw["ms_efficiency"],
            ce_efficiency=raw["ce_efficiency"],
            wall_clock_per_task=tuple(raw.get("wall_clock_per_task", ())),
        )


def profile(
    lineage: Sequence[Model],
    tasks: Sequence[TaskSet],
    steps_per_task: Sequence[int] | None = None,
    wall_clock_per_task: Sequence[float] | None = None,
) -> MetricReport:
    """Score every checkpoint against all tasks seen up to its position."""
    if len(lineage) != len(tasks) or not tasks:
        raise MissingTestSet(
            f"lineage has {len(lineage)} checkpoints for {len(tasks)} tasks"
        )
    for task in tasks:
        if task.test_x is None or len(task.test_x) == 0:
            raise MissingTestSet(f"task {task.name} has no test set")
    matrix = tuple(
        tuple(accuracy(model, tasks[j].test_x, tasks[j].test_y) for j in range(i + 1))
        for i, model in enumerate(lineage)
    )
    t = len(tasks)
    sizes = [m.layout.size for m in lineage]
    steps = list(steps_per_task) if steps_per_task is not None else [1] * t
    return MetricReport(
        acc_matrix=matrix,
        bwt=bwt(matrix) if t >= 2 else None,
        final_acc=float(sum(matrix[t - 1]) / t),
        ms_efficiency=ms_efficiency(sizes),
        ce_efficiency=ce_efficiency(steps),
        wall_clock_per_task=tuple(wall_clock_per_task or ()),
    )


# -- validation gate ----------------------------------------------------------------


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def two_proportion_z(successes_a: int, n_a: int, successes_b: int, n_b: int,
                     ) -> tuple[float, float]:
    """Pooled two-proportion z and its two-sided p-value.

    z is (p_a - p_b)/SE, so swapping the arms negates it exactly; equal
    arms (or a degenerate pooled variance) give z = 0.
    """
    if n_a < 1 or n_b < 1:
        raise EmptyList("both arms need at least one observation")
    p_a = successes_a / n_a
    p_b = successes_b / n_b
    pooled = (successes_a + successes_b) / (n_a + n_b)
    se = math.sqrt(pooled * (1.0 - pooled) * (1.0 / n_a + 1.0 / n_b))
    if se == 0.0:
        return 0.0, 1.0
    z = (p_a - p_b) / se
    return z, 2.0 * (1.0 - normal_cdf(abs(z)))


@dataclass(frozen=True)
class ValidationVerdict:
    decision: str
    holdout_acc_new: float
    holdout_acc_old: float
    ab: dict | None
    reasons: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "decision": self.decision,
            "holdout_acc_new": self.holdout_acc_new,
            "holdout_acc_old": self.holdout_acc_old,
            "ab": self.ab,
            "reasons": list(self.reasons),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ValidationVerdict":
        return cls(
            decision=raw["decision"],
            holdout_acc_new=raw["holdout_acc_new"],
            holdout_acc_old=raw["holdout_acc_old"],
            ab=raw.get("ab"),
            reasons=tuple(raw.get("reasons", ())),
        )


def carve_holdout(
    window_records: Sequence[RequestRecord],
    history_records: Sequence[RequestRecord],
    fraction: float,
) -> tuple[list[RequestRecord], list[RequestRecord]]:
    """Split labeled data into (holdout, training remainder).

    The holdout takes the newest ceil(fraction * W) labeled records of the
    trigger window plus an equally sized newest slice of older labeled
    history, so the gate sees both the new distribution and the retained
    one.  Remainder = everything else, id-disjoint by construction.
    """
    window_labeled = [r for r in window_records if r.label is not None]
    if not window_labeled:
        raise EmptyHoldout("trigger window has no labeled records")
    window_ids = {r.record_id for r in window_labeled}
    history_labeled = [
        r for r in history_records
        if r.label is not None and r.record_id not in window_ids
    ]
    k = max(1, math.ceil(fraction * len(window_labeled)))
    holdout = history_labeled[-k:] + window_labeled[-k:]
    remainder = history_labeled[:-k] if k <= len(history_labeled) else []
    remainder = remainder + window_labeled[:-k]
    return holdout, remainder


def validate(
    candidate: Model,
    incumbent: Model,
    holdout: Sequence[RequestRecord],
    policy: ValidationPolicy,
    seed: int,
    manifest: DataManifest | None = None,
) -> ValidationVerdict:
    """Gate a candidate: accuracy floor, bounded regression, A/B z-test.

    The A/B rule rejects only when the candidate is significantly WORSE
    (one-sided); matching the incumbent is enough to pass.  Arms below
    MIN_ARM_SIZE defer to a human instead of trusting the approximation.
    """
    labeled = [r for r in holdout if r.label is not None]
    if not labeled:
        raise EmptyHoldout("holdout has no labeled records")
    if manifest is not None:
        overlap = {r.record_id for r in labeled} & set(manifest.record_ids)
        if overlap:
            raise OverlappingHoldout(f"holdout shares ids with manifest: {sorted(overlap)}")

    x = np.asarray([r.features for r in labeled])
    y = np.asarray([r.label for r in labeled])
    acc_new = accuracy(candidate, x, y)
    acc_old = accuracy(incumbent, x, y)

    reasons: list[str] = []
    failed = False
    pending = False

    if acc_new >= policy.min_accuracy:
        reasons.append(f"min_accuracy: pass ({acc_new:.4f} >= {policy.min_accuracy})")
    else:
        reasons.append(f"min_accuracy: fail ({acc_new:.4f} < {policy.min_accuracy})")
        failed = True

    floor = acc_old - policy.max_accuracy_drop
    if acc_new >= floor:
        reasons.append(f"max_accuracy_drop: pass ({acc_new:.4f} >= {floor:.4f})")
    else:
        reasons.append(f"max_accuracy_drop: fail ({acc_new:.4f} < {floor:.4f})")
        failed = True

    coin = random.Random(seed)
    arm_a: list[int] = []  # incumbent
    arm_b: list[int] = []  # candidate
    for i in range(len(labeled)):
        (arm_a if coin.random() < 0.5 else arm_b).append(i)

    ab: dict | None = None
    if len(arm_a) < MIN_ARM_SIZE or len(arm_b) < MIN_ARM_SIZE:
        reasons.append(
            f"ab_test: pending ({len(arm_a)}/{len(arm_b)} below arm minimum {MIN_ARM_SIZE})"
        )
        pending = True
    else:
        probs_old, _ = _batch_forward(incumbent, x)
        probs_new, _ = _batch_forward(candidate, x)
        pred_old = np.argmax(probs_old, axis=1)
        pred_new = np.argmax(probs_new, axis=1)
        correct_a = int(sum(pred_old[i] == y[i] for i in arm_a))
        correct_b = int(sum(pred_new[i] == y[i] for i in arm_b))
        # z oriented candidate-minus-incumbent: negative means degradation
        z, p_two = two_proportion_z(correct_b, len(arm_b), correct_a, len(arm_a))
        p_worse = normal_cdf(z)
        ab = {
            "z": z,
            "p_value": p_two,
            "n_a": len(arm_a),
            "n_b": len(arm_b),
            "correct_a": correct_a,
            "correct_b": correct_b,
        }
        if p_worse < policy.ab_significance:
            reasons.append(
                f"ab_test: fail (one-sided degradation p {p_worse:.4g} "
                f"< {policy.ab_significance})"
            )
            failed = True
        else:
            reasons.append(f"ab_test: pass (one-sided degradation p {p_worse:.4g})")

    if failed:
        decision = REJECTED
    elif pending or policy.require_manual_approval:
        if policy.require_manual_approval and not pending:
            reasons.append("manual_approval: required by policy")
        decision = PENDING_MANUAL
    else:
        decision = ACCEPTED
    return ValidationVerdict(
        decision=decision,
        holdout_acc_new=acc_new,
        holdout_acc_old=acc_old,
        ab=ab,
        reasons=tuple(reasons),
    )


# -- reference forgetting benchmark ---------------------------------------------------


def two_task_sets(seed: int, dim: int = 10, n_train: int = 200, n_test: int = 200,
                  sigma: float = synth.DEFAULT_SIGMA,
                  separation: float = synth.DEFAULT_SEPARATION,
                  ) -> tuple[TaskSet, TaskSet]:
    """Sequential pair: task A on axis 0, task B on an orthogonal axis.

    Task B's samples come from blob centers on axis 2 (generator ids 4/5)
    but are labeled 2/3, so a model trained on A grows from two to four
    output rows exactly like a new-class update.  The orthogonal geometry
    is deliberate: when the new centers lean into task A's axis, the
    freshly grown — and so unanchored — output rows fire on old-task
    inputs no matter how firmly the old parameters are held, and every
    anchoring method collapses to plain fine-tuning.  Disjoint axes make
    retention achievable by holding parameters, which is the capability
    this benchmark is meant to rank.
    """
    xa, ya = synth.make_blobs(seed, [0, 1], n_train + n_test, dim=dim,
                              sigma=sigma, separation=separation)
    xb, yb = synth.make_blobs(seed + 1, [4, 5], n_train + n_test, dim=dim,
                              sigma=sigma, separation=separation)
    yb = yb - 2
    split = 2 * n_train
    task_a = TaskSet("task-a", xa[:split], ya[:split], xa[split:], ya[split:])
    task_b = TaskSet("task-b", xb[:split], yb[:split], xb[split:], yb[split:])
    return task_a, task_b


def forgetting_benchmark(loss: str, seed: int, dim: int = 10, hidden: int = 16,
                         epochs: int = 30, learning_rate: float = 0.1,
                         ewc_lambda: float = 100.0, si_c: float = 0.1,
                         sigma: float = synth.DEFAULT_SIGMA,
                         separation: float = synth.DEFAULT_SEPARATION,
                         ) -> MetricReport:
    """Two sequential tasks (classes 0/1 then new classes 2/3), one loss kind.

    Trains task A from a seeded init, expands the output layer, trains task
    B under the requested anchoring (none / ewc / si / rehearsal), and
    profiles the two checkpoints.  Fixed seed makes the whole run
    reproducible, so reports are comparable across loss kinds.
    """
    task_a, task_b = two_task_sets(seed, dim=dim, sigma=sigma,
                                   separation=separation)
    cfg = CLPolicy(
        loss=loss if loss != "none" else "none",
        ewc_lambda=ewc_lambda,
        si_c=si_c,
        epochs=epochs,
        learning_rate=learning_rate,
        batch_size=32,
    )
    model = Model.seeded_init(ParamLayout(dim, hidden, 2), seed)

    si_state = SiState.fresh(model.params, xi=cfg.si_xi, c=cfg.si_c) if cfg.si_enabled else None
    model, _, steps_a, si_state = fit(model, task_a.train_x, task_a.train_y, cfg, seed,
                                      si_state=si_state)
    if si_state is not None:
        si_state = si_consolidate(si_state, model.params)
    checkpoint_a = model.copy()

    old_layout = model.layout
    model, _ = expand_for_labels(model, [2, 3])
    ewc_anchor = None
    if cfg.ewc_enabled and cfg.ewc_lambda > 0:
        fisher = fisher_diag(model, (task_a.train_x, task_a.train_y))
        fisher = fisher * expansion_mask(old_layout, model.layout)
        ewc_anchor = EwcAnchor(theta_star=model.params.copy(), fisher=fisher,
                               lam=cfg.ewc_lambda)
    if si_state is not None:
        si_state = expand_si_state(si_state, old_layout, model.layout, model.params)

    train_x, train_y = task_b.train_x, task_b.train_y
    if cfg.rehearsal_enabled:
        rng = np.random.default_rng(seed + 2)
        n_a = task_a.train_x.shape[0]
        take = rng.choice(n_a, size=min(n_a, train_x.shape[0]), replace=False)
        train_x = np.concatenate([train_x, task_a.train_x[take]])
        train_y = np.concatenate([train_y, task_a.train_y[take]])

    model, _, steps_b, si_state = fit(model, train_x, train_y, cfg, seed + 3,
                                      ewc_anchor=ewc_anchor, si_state=si_state)
    checkpoint_b = model.copy()

    return profile([checkpoint_a, checkpoint_b], [task_a, task_b],
                   steps_per_task=[steps_a, steps_b])
