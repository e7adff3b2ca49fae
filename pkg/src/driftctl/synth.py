"""Seeded synthetic workloads: Gaussian class blobs and drifting request streams.

Experiments run on desk-scale Gaussian mixtures instead of real datasets.
Task A holds classes 0/1 on one axis; task B introduces classes 2/3 whose
centers lean into task A's axis, so naive fine-tuning on B overwrites what
A needs and anchoring methods have something to protect.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_DIM = 10
DEFAULT_SEPARATION = 3.0
DEFAULT_SIGMA = 1.0


def class_center(class_id: int, dim: int = DEFAULT_DIM,
                 separation: float = DEFAULT_SEPARATION) -> np.ndarray:
    """Fixed center for a synthetic class.

    Classes 0/1 sit at +/- separation on axis 0.  Classes 2/3 sit at +/-
    separation on the diagonal of axes 0 and 1, deliberately sharing axis 0
    with the first pair.  Higher ids fan out on later axes.
    """
    center = np.zeros(dim)
    if class_id == 0:
        center[0] = separation
    elif class_id == 1:
        center[0] = -separation
    elif class_id == 2:
        center[0] = separation / math.sqrt(2.0)
        center[1] = separation / math.sqrt(2.0)
    elif class_id == 3:
        center[0] = -separation / math.sqrt(2.0)
        center[1] = -separation / math.sqrt(2.0)
    else:
        axis = 2 + (class_id - 4) // 2
        sign = 1.0 if class_id % 2 == 0 else -1.0
        center[min(axis, dim - 1)] = sign * separation
    return center


def sample_class(rng: np.random.Generator, class_id: int, n: int,
                 dim: int = DEFAULT_DIM, sigma: float = DEFAULT_SIGMA,
                 separation: float = DEFAULT_SEPARATION) -> np.ndarray:
    return class_center(class_id, dim, separation) + sigma * rng.standard_normal((n, dim))


def make_blobs(seed: int, class_ids: list[int], n_per_class: int,
               dim: int = DEFAULT_DIM, sigma: float = DEFAULT_SIGMA,
               separation: float = DEFAULT_SEPARATION) -> tuple[np.ndarray, np.ndarray]:
    """Shuffled labeled sample with n_per_class points per class."""
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for cid in class_ids:
        xs.append(sample_class(rng, cid, n_per_class, dim, sigma, separation))
        ys.append(np.full(n_per_class, cid, dtype=np.int64))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    order = rng.permutation(x.shape[0])
    return x[order], y[order]


@dataclass(frozen=True)
class StreamSpec:
    """A piecewise-stationary labeled request stream."""

    seed: int = 7
    dim: int = DEFAULT_DIM
    sigma: float = DEFAULT_SIGMA
    separation: float = DEFAULT_SEPARATION
    phase1_classes: tuple[int, ...] = (0, 1)
    phase2_classes: tuple[int, ...] = (2, 3)
    change_point: int = 2500
    length: int = 5000


def make_stream(spec: StreamSpec) -> tuple[np.ndarray, np.ndarray]:
    """Labeled stream of `length` rows; classes switch at the change point.

    Rows before change_point draw uniformly from phase1 classes, rows after
    from phase2 classes.  Setting phase2 = phase1 yields a stationary stream.
    """
    rng = np.random.default_rng(spec.seed)
    x = np.empty((spec.length, spec.dim))
    y = np.empty(spec.length, dtype=np.int64)
    for i in range(spec.length):
        pool = spec.phase1_classes if i < spec.change_point else spec.phase2_classes
        cid = int(pool[rng.integers(len(pool))])
        x[i] = sample_class(rng, cid, 1, spec.dim, spec.sigma, spec.separation)[0]
        y[i] = cid
    return x, y
