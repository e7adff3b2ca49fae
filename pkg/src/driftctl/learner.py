"""Desk-scale classifier with hand-derived gradients and CL regularizers.

The model is a one-hidden-layer tanh MLP (or logistic regression when
hidden_dim = 0) over a flat f64 parameter vector, so every gradient is
analytic and checkable against finite differences.  On top of plain
cross-entropy sit the two anchoring penalties (quadratic pulls toward the
previous task's optimum, Fisher- or path-integral-weighted) and rehearsal
mixing handled by the data plane.  The training engine executes one update
job: scenario-dependent class expansion, seeded mini-batch SGD, and a
deterministic report.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import CLPolicy
from .data import DataManifest, RequestRecord
from .drift import DriftReport
from .errors import (
    DimensionMismatch,
    EmptyData,
    InvalidRecord,
    LengthMismatch,
    ManifestMismatch,
    NumericalDivergence,
    UnlabeledBatch,
)
from .events import canonical_json

NC = "NC"
NI = "NI"
NIC = "NIC"
OFFLINE = "OFFLINE"
SCENARIOS = (NC, NI, NIC, OFFLINE)

JOB_QUEUED = "queued"
JOB_RUNNING = "running"
JOB_FINISHED = "finished"
JOB_FAILED = "failed"

_JOB_TRANSITIONS = {
    JOB_QUEUED: {JOB_RUNNING},
    JOB_RUNNING: {JOB_FINISHED, JOB_FAILED},
    JOB_FINISHED: set(),
    JOB_FAILED: set(),
}


@dataclass(frozen=True)
class ParamLayout:
    """Fixed flat layout: [W1, b1, W2, b2] for the MLP, [W, b] otherwise."""

    input_dim: int
    hidden_dim: int
    num_classes: int

    @property
    def size(self) -> int:
        d, h, c = self.input_dim, self.hidden_dim, self.num_classes
        if h == 0:
            return c * d + c
        return h * d + h + c * h + c

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "num_classes": self.num_classes,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ParamLayout":
        return cls(raw["input_dim"], raw.get("hidden_dim", 0), raw["num_classes"])


class Model:
    """Classifier over a flat parameter vector; known classes are 0..C-1."""

    def __init__(self, layout: ParamLayout, params: np.ndarray | None = None):
        self.layout = layout
        if params is None:
            params = np.zeros(layout.size, dtype=np.float64)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (layout.size,):
            raise DimensionMismatch(
                f"parameter vector has shape {params.shape}, expected ({layout.size},)"
            )
        self.params = params.copy()

    @property
    def known_classes(self) -> set[int]:
        return set(range(self.layout.num_classes))

    def copy(self) -> "Model":
        return Model(self.layout, self.params)

    def _views(self, params: np.ndarray | None = None):
        """Reshaped views into the flat vector, in layout order."""
        theta = self.params if params is None else params
        d, h, c = self.layout.input_dim, self.layout.hidden_dim, self.layout.num_classes
        if h == 0:
            w = theta[: c * d].reshape(c, d)
            b = theta[c * d:]
            return w, b
        ofs = 0
        w1 = theta[ofs: ofs + h * d].reshape(h, d); ofs += h * d
        b1 = theta[ofs: ofs + h]; ofs += h
        w2 = theta[ofs: ofs + c * h].reshape(c, h); ofs += c * h
        b2 = theta[ofs:]
        return w1, b1, w2, b2

    def to_checkpoint(self) -> str:
        """Byte-stable self-describing record for digests and persistence."""
        return canonical_json({
            "schema_version": 1,
            "layout": self.layout.to_dict(),
            "params": [float(p) for p in self.params],
            "known_classes": sorted(self.known_classes),
        })

    @classmethod
    def from_checkpoint(cls, text: str) -> "Model":
        import json
        raw = json.loads(text)
        layout = ParamLayout.from_dict(raw["layout"])
        return cls(layout, np.asarray(raw["params"], dtype=np.float64))

    @classmethod
    def seeded_init(cls, layout: ParamLayout, seed: int, scale: float = 0.1) -> "Model":
        rng = np.random.default_rng(seed)
        return cls(layout, scale * rng.standard_normal(layout.size))


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _batch_forward(model: Model, x: np.ndarray):
    """Returns (probs, hidden activations or None) for a (N, d) batch."""
    if model.layout.hidden_dim == 0:
        w, b = model._views()
        return _softmax(x @ w.T + b), None
    w1, b1, w2, b2 = model._views()
    a = np.tanh(x @ w1.T + b1)
    return _softmax(a @ w2.T + b2), a


def forward(model: Model, x: Sequence[float]) -> np.ndarray:
    """Class probability vector for one input; sums to 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.layout.input_dim,):
        raise DimensionMismatch(
            f"input has shape {x.shape}, expected ({model.layout.input_dim},)"
        )
    probs, _ = _batch_forward(model, x[None, :])
    return probs[0]


def predict(model: Model, x: Sequence[float]) -> tuple[int, float]:
    probs = forward(model, x)
    cls = int(np.argmax(probs))
    return cls, float(probs[cls])


# -- anchoring penalties -----------------------------------------------------------


@dataclass(frozen=True)
class EwcAnchor:
    """Quadratic pull toward the previous optimum, Fisher-weighted."""

    theta_star: np.ndarray
    fisher: np.ndarray
    lam: float

    def __post_init__(self):
        if self.theta_star.shape != self.fisher.shape:
            raise LengthMismatch("theta_star and fisher lengths differ")
        if self.lam < 0:
            raise InvalidRecord("lambda must be >= 0")
        if np.any(self.fisher < 0):
            raise InvalidRecord("fisher entries must be >= 0")


def ewc_penalty(theta: np.ndarray, anchor: EwcAnchor) -> float:
    if theta.shape != anchor.theta_star.shape:
        raise LengthMismatch(
            f"theta length {theta.shape} != anchor length {anchor.theta_star.shape}"
        )
    diff = theta - anchor.theta_star
    return float(0.5 * anchor.lam * np.sum(anchor.fisher * diff * diff))


def _ewc_grad(theta: np.ndarray, anchor: EwcAnchor) -> np.ndarray:
    return anchor.lam * anchor.fisher * (theta - anchor.theta_star)


@dataclass(frozen=True)
class SiState:
    """Path-integral importance accumulator across tasks."""

    omega: np.ndarray
    big_omega: np.ndarray
    theta_star: np.ndarray
    xi: float = 0.1
    c: float = 0.1

    def __post_init__(self):
        if not (self.omega.shape == self.big_omega.shape == self.theta_star.shape):
            raise LengthMismatch("accumulator lengths differ")
        if self.xi <= 0:
            raise InvalidRecord("xi must be > 0")
        if self.c < 0:
            raise InvalidRecord("c must be >= 0")

    @classmethod
    def fresh(cls, theta: np.ndarray, xi: float = 0.1, c: float = 0.1) -> "SiState":
        n = theta.shape[0]
        return cls(np.zeros(n), np.zeros(n), theta.copy(), xi=xi, c=c)


def si_step(state: SiState, grad_at_step: np.ndarray, delta_theta: np.ndarray) -> SiState:
    """Per-step accumulation omega -= g * delta (g includes penalties)."""
    if grad_at_step.shape != state.omega.shape or delta_theta.shape != state.omega.shape:
        raise LengthMismatch("gradient/step lengths differ from accumulator")
    return SiState(
        omega=state.omega - grad_at_step * delta_theta,
        big_omega=state.big_omega,
        theta_star=state.theta_star,
        xi=state.xi,
        c=state.c,
    )


def si_consolidate(state: SiState, theta_new: np.ndarray) -> SiState:
    """Task end: fold omega into the importance weights, re-anchor, reset.

    Per-parameter contributions are clamped at zero so the importance
    vector stays nonnegative.
    """
    if theta_new.shape != state.omega.shape:
        raise LengthMismatch("theta length differs from accumulator")
    displacement = theta_new - state.theta_star
    gain = np.maximum(state.omega, 0.0) / (displacement * displacement + state.xi)
    return SiState(
        omega=np.zeros_like(state.omega),
        big_omega=state.big_omega + gain,
        theta_star=theta_new.copy(),
        xi=state.xi,
        c=state.c,
    )


def si_penalty(theta: np.ndarray, state: SiState) -> float:
    if theta.shape != state.theta_star.shape:
        raise LengthMismatch("theta length differs from accumulator")
    diff = theta - state.theta_star
    return float(state.c * np.sum(state.big_omega * diff * diff))


def _si_grad(theta: np.ndarray, state: SiState) -> np.ndarray:
    return 2.0 * state.c * state.big_omega * (theta - state.theta_star)


# -- loss and gradient -------------------------------------------------------------


def _as_xy(batch, input_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalize a batch (records or (X, y)) to float/int arrays."""
    if isinstance(batch, tuple) and len(batch) == 2:
        x, y = batch
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y)
        if np.any([v is None for v in np.ravel(y)]):
            raise UnlabeledBatch("batch contains unlabeled rows")
        y = y.astype(np.int64)
    else:
        records: Sequence[RequestRecord] = batch
        if any(r.label is None for r in records):
            raise UnlabeledBatch("batch contains unlabeled records")
        x = np.asarray([r.features for r in records], dtype=np.float64)
        y = np.asarray([r.label for r in records], dtype=np.int64)
    if x.ndim != 2 or x.shape[1] != input_dim:
        raise DimensionMismatch(
            f"batch features have shape {x.shape}, expected (*, {input_dim})"
        )
    if x.shape[0] == 0:
        raise UnlabeledBatch("batch is empty")
    return x, y


def loss_and_grad(
    model: Model,
    batch,
    ewc_anchor: EwcAnchor | None = None,
    si_state: SiState | None = None,
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy plus configured penalties, with exact gradient."""
    x, y = _as_xy(batch, model.layout.input_dim)
    if np.any(y < 0) or np.any(y >= model.layout.num_classes):
        raise UnlabeledBatch(
            f"labels outside model classes 0..{model.layout.num_classes - 1}"
        )
    n = x.shape[0]
    probs, hidden = _batch_forward(model, x)
    eps = 1e-300  # guards log(0) in f64; softmax outputs are positive anyway
    loss = float(-np.mean(np.log(probs[np.arange(n), y] + eps)))

    dz = probs.copy()
    dz[np.arange(n), y] -= 1.0
    dz /= n

    grad = np.empty_like(model.params)
    d, h, c = model.layout.input_dim, model.layout.hidden_dim, model.layout.num_classes
    if h == 0:
        grad[: c * d] = (dz.T @ x).ravel()
        grad[c * d:] = dz.sum(axis=0)
    else:
        w1, b1, w2, b2 = model._views()
        da = dz @ w2
        dpre = da * (1.0 - hidden * hidden)
        ofs = 0
        grad[ofs: ofs + h * d] = (dpre.T @ x).ravel(); ofs += h * d
        grad[ofs: ofs + h] = dpre.sum(axis=0); ofs += h
        grad[ofs: ofs + c * h] = (dz.T @ hidden).ravel(); ofs += c * h
        grad[ofs:] = dz.sum(axis=0)

    if ewc_anchor is not None:
        loss += ewc_penalty(model.params, ewc_anchor)
        grad += _ewc_grad(model.params, ewc_anchor)
    if si_state is not None:
        loss += si_penalty(model.params, si_state)
        grad += _si_grad(model.params, si_state)
    return loss, grad


def fisher_diag(model: Model, data, n_samples: int | None = None) -> np.ndarray:
    """Average per-sample squared gradient of log p(y|x) at the current params."""
    x, y = _as_xy(data, model.layout.input_dim)
    if n_samples is not None:
        if n_samples < 1:
            raise EmptyData("n_samples must be >= 1")
        x, y = x[:n_samples], y[:n_samples]
    if x.shape[0] == 0:
        raise EmptyData("no samples for the information estimate")
    total = np.zeros_like(model.params)
    for i in range(x.shape[0]):
        # gradient of -CE for one sample = gradient of log p(y|x)
        _, g = loss_and_grad(model, (x[i: i + 1], y[i: i + 1]))
        total += g * g
    return total / x.shape[0]


# -- scenario switch ---------------------------------------------------------------


def select_scenario(report: DriftReport, policy: CLPolicy) -> str:
    """Map a drift report to an update mode.

    Mostly-new-class windows retrain with class expansion (NC), mixed
    windows use NIC, pure distribution shift uses NI.  A magnitude at or
    above tau_offline forces a full offline retrain regardless.
    """
    thresholds = policy.scenario_thresholds
    if report.magnitude >= thresholds.tau_offline:
        return OFFLINE
    if report.new_class_fraction >= thresholds.tau_nc:
        return NC
    if report.new_class_fraction > 0.0:
        return NIC
    return NI


def expand_for_labels(model: Model, labels: Sequence[int]) -> tuple[Model, list[int]]:
    """Grow the output layer to cover every label; new rows zero-initialized.

    Zero rows keep all pre-expansion logits unchanged, so the expanded model
    behaves identically on old classes until trained.
    """
    max_label = max(labels, default=-1)
    old_c = model.layout.num_classes
    if max_label < old_c:
        return model.copy(), []
    new_c = max_label + 1
    d, h = model.layout.input_dim, model.layout.hidden_dim
    new_layout = ParamLayout(d, h, new_c)
    expanded = Model(new_layout)
    if h == 0:
        w, b = model._views()
        ew, eb = expanded._views()
        ew[:old_c] = w
        eb[:old_c] = b
    else:
        w1, b1, w2, b2 = model._views()
        e1, eb1, e2, eb2 = expanded._views()
        e1[:] = w1
        eb1[:] = b1
        e2[:old_c] = w2
        eb2[:old_c] = b2
    return expanded, list(range(old_c, new_c))


# -- update jobs -------------------------------------------------------------------


@dataclass
class UpdateJob:
    """One scheduled training task."""

    job_id: str
    scenario: str
    manifest: DataManifest
    loss_config: CLPolicy
    base_version: int
    status: str = JOB_QUEUED
    resource_demand: dict = field(default_factory=lambda: {"slots": 1, "compute_cost": 0.0})

    def transition(self, new_status: str) -> None:
        if new_status not in _JOB_TRANSITIONS[self.status]:
            raise InvalidRecord(f"job {self.job_id}: {self.status} -> {new_status} not allowed")
        self.status = new_status

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "scenario": self.scenario,
            "manifest_id": self.manifest.manifest_id,
            "base_version": self.base_version,
            "status": self.status,
            "resource_demand": self.resource_demand,
        }


@dataclass
class TrainingReport:
    """Deterministic record of one training run (wall clock kept separate)."""

    job_id: str
    scenario: str
    epochs: int
    steps: int
    epoch_losses: list[float]
    final_loss: float
    seed: int
    expanded_classes: list[int]
    manifest_id: str
    wall_clock_ms: float = 0.0
    si_state: SiState | None = None

    def to_dict(self) -> dict:
        # wall clock is intentionally excluded: event-log digests must be
        # reproducible across runs
        return {
            "job_id": self.job_id,
            "scenario": self.scenario,
            "epochs": self.epochs,
            "steps": self.steps,
            "epoch_losses": [round(v, 12) for v in self.epoch_losses],
            "final_loss": round(self.final_loss, 12),
            "seed": self.seed,
            "expanded_classes": self.expanded_classes,
            "manifest_id": self.manifest_id,
        }


def fit(
    model: Model,
    x: np.ndarray,
    y: np.ndarray,
    config: CLPolicy,
    seed: int,
    ewc_anchor: EwcAnchor | None = None,
    si_state: SiState | None = None,
) -> tuple[Model, list[float], int, SiState | None]:
    """Seeded mini-batch SGD; returns (model, per-epoch losses, steps, si state).

    The model is mutated in place (callers pass a copy).  The path-integral
    accumulator advances every step using the same gradient that produced
    the step, penalties included.
    """
    n = x.shape[0]
    rng = np.random.default_rng(seed)
    epoch_losses: list[float] = []
    steps = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        batch_losses: list[float] = []
        for start in range(0, n, config.batch_size):
            idx = order[start: start + config.batch_size]
            loss, grad = loss_and_grad(model, (x[idx], y[idx]), ewc_anchor, si_state)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise NumericalDivergence(f"non-finite loss/gradient at step {steps}")
            delta = -config.learning_rate * grad
            if si_state is not None:
                si_state = si_step(si_state, grad, delta)
            model.params += delta
            batch_losses.append(loss)
            steps += 1
        epoch_losses.append(float(np.mean(batch_losses)))
    return model, epoch_losses, steps, si_state


def run_update(
    job: UpdateJob,
    base: Model,
    training_set: Sequence[RequestRecord],
    config: CLPolicy,
    seed: int,
    ewc_anchor: EwcAnchor | None = None,
    si_state: SiState | None = None,
) -> tuple[Model, TrainingReport]:
    """Execute one update job end to end.

    NC/NIC expand the output layer first; OFFLINE restarts from a seeded
    random init instead of the deployed parameters.  When the anchoring
    penalty is enabled and no anchor is supplied, one is computed from the
    base model on the manifest's rehearsal slice.
    """
    ids = tuple(r.record_id for r in training_set)
    if ids != job.manifest.record_ids:
        raise ManifestMismatch(
            f"training set ids do not match manifest {job.manifest.manifest_id}"
        )
    job.transition(JOB_RUNNING)
    started = time.perf_counter()
    try:
        labels = [r.label for r in training_set]
        x = np.asarray([r.features for r in training_set], dtype=np.float64)
        y = np.asarray(labels, dtype=np.int64)

        expanded_classes: list[int] = []
        if job.scenario == OFFLINE:
            num_classes = max(max(labels) + 1, base.layout.num_classes)
            layout = ParamLayout(base.layout.input_dim, base.layout.hidden_dim, num_classes)
            model = Model.seeded_init(layout, seed)
            ewc_anchor = None
            si_state = None
        else:
            model = base.copy()
            if job.scenario in (NC, NIC):
                model, expanded_classes = expand_for_labels(model, labels)

        if job.scenario != OFFLINE:
            if ewc_anchor is None and config.ewc_enabled and config.ewc_lambda > 0:
                rehearsal = training_set[job.manifest.new_count:]
                anchor_data = rehearsal if rehearsal else None
                if anchor_data is not None:
                    anchor_model = model.copy()
                    fisher = fisher_diag(anchor_model, list(anchor_data))
                    if expanded_classes:
                        fisher = fisher * expansion_mask(base.layout, model.layout)
                    ewc_anchor = EwcAnchor(
                        theta_star=model.params.copy(),
                        fisher=fisher,
                        lam=config.ewc_lambda,
                    )
            if si_state is None and config.si_enabled:
                si_state = SiState.fresh(model.params, xi=config.si_xi, c=config.si_c)
            elif si_state is not None and config.si_enabled:
                if si_state.omega.shape[0] != model.params.shape[0]:
                    si_state = expand_si_state(si_state, base.layout, model.layout,
                                               model.params)

        model, epoch_losses, steps, si_state = fit(
            model, x, y, config, seed, ewc_anchor=ewc_anchor, si_state=si_state,
        )
        if si_state is not None:
            si_state = si_consolidate(si_state, model.params)
    except NumericalDivergence:
        job.transition(JOB_FAILED)
        raise
    job.transition(JOB_FINISHED)
    report = TrainingReport(
        job_id=job.job_id,
        scenario=job.scenario,
        epochs=config.epochs,
        steps=steps,
        epoch_losses=epoch_losses,
        final_loss=epoch_losses[-1] if epoch_losses else 0.0,
        seed=seed,
        expanded_classes=expanded_classes,
        manifest_id=job.manifest.manifest_id,
        wall_clock_ms=(time.perf_counter() - started) * 1000.0,
        si_state=si_state,
    )
    return model, report


def _remap_flat(vec: np.ndarray, old: ParamLayout, new: ParamLayout,
                base: np.ndarray | None = None) -> np.ndarray:
    """Move old flat entries to their positions in the grown layout.

    Output rows/biases added by expansion sit INSIDE the trailing blocks, so
    a plain tail-pad would misalign everything after the output weights.
    Positions with no old counterpart take `base` values (zeros by default).
    """
    if (old.input_dim, old.hidden_dim) != (new.input_dim, new.hidden_dim):
        raise LengthMismatch("only output-layer growth is supported")
    if new.num_classes < old.num_classes:
        raise LengthMismatch("parameter vector shrank; cannot carry accumulators")
    out = np.zeros(new.size) if base is None else base.copy()
    d, h = old.input_dim, old.hidden_dim
    oc, nc = old.num_classes, new.num_classes
    if h == 0:
        out[: oc * d] = vec[: oc * d]
        out[nc * d: nc * d + oc] = vec[oc * d:]
    else:
        stem = h * d + h
        out[:stem] = vec[:stem]
        out[stem: stem + oc * h] = vec[stem: stem + oc * h]
        out[stem + nc * h: stem + nc * h + oc] = vec[stem + oc * h:]
    return out


def expansion_mask(old: ParamLayout, new: ParamLayout) -> np.ndarray:
    """1.0 where a parameter existed before output growth, 0.0 for new ones.

    Anchoring penalties must not pin freshly added output rows to their
    zero initialization — a fresh head has no previous optimum to protect.
    """
    return _remap_flat(np.ones(old.size), old, new)


def expand_si_state(state: SiState, old: ParamLayout, new: ParamLayout,
                    theta_new: np.ndarray) -> SiState:
    """Carry accumulators across an output-layer expansion.

    New parameters start with zero importance and anchor at their current
    (zero-initialized) values, so they are free to move.
    """
    return SiState(
        omega=_remap_flat(state.omega, old, new),
        big_omega=_remap_flat(state.big_omega, old, new),
        theta_star=_remap_flat(state.theta_star, old, new, base=theta_new),
        xi=state.xi,
        c=state.c,
    )
