# -*- coding: utf-8 -*-
"""
Transition datasets: collection from the plant and mismatch targets
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from ..errors import ContractViolation, DivergenceError
from .dynamics import DEFAULT_DT, DEFAULT_SUBSTEPS, STATE_BOX, Box, step

logger = logging.getLogger(__name__)

DEFAULT_X0 = (0.5, 1.0)

# Operating region of the identification data; the affine-in-rho nominal
# class only fits one-step maps well while |x1| stays small
COLLECTION_BOX = Box((-0.8, 0.0), (0.8, 10.0))

# Batched one-step model: (x[n,2], u[n,2]) -> x_next[n,2]
NominalMap = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _frozen(array, name: str, rows: int) -> np.ndarray:
    array = np.array(array, dtype=np.float64).reshape(-1, 2)
    if len(array) != rows:
        raise ContractViolation(f"Dataset field '{name}' has {len(array)} rows, expected {rows}")
    if not np.all(np.isfinite(array)):
        raise ContractViolation(f"Dataset field '{name}' contains non-finite values")
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class TransitionDataset:
    """Immutable (x, u, x_next) records with optional mismatch targets and split"""

    x: np.ndarray
    u: np.ndarray
    x_next: np.ndarray
    g: Optional[np.ndarray] = None
    train_idx: Optional[np.ndarray] = None
    test_idx: Optional[np.ndarray] = None

    def __post_init__(self):
        rows = len(np.asarray(self.x).reshape(-1, 2))
        object.__setattr__(self, "x", _frozen(self.x, "x", rows))
        object.__setattr__(self, "u", _frozen(self.u, "u", rows))
        object.__setattr__(self, "x_next", _frozen(self.x_next, "x_next", rows))
        if self.g is not None:
            object.__setattr__(self, "g", _frozen(self.g, "g", rows))
        if (self.train_idx is None) != (self.test_idx is None):
            raise ContractViolation("Train and test indices must be given together")
        if self.train_idx is not None:
            train = np.asarray(self.train_idx, dtype=np.intp)
            test = np.asarray(self.test_idx, dtype=np.intp)
            covered = np.sort(np.concatenate([train, test]))
            if not np.array_equal(covered, np.arange(rows)):
                raise ContractViolation("Train/test split must be disjoint and cover every record")
            train.flags.writeable = False
            test.flags.writeable = False
            object.__setattr__(self, "train_idx", train)
            object.__setattr__(self, "test_idx", test)

    def __len__(self):
        return len(self.x)

    @property
    def has_targets(self) -> bool:
        return self.g is not None

    @property
    def has_split(self) -> bool:
        return self.train_idx is not None

    def subset(self, indices: Sequence[int]) -> "TransitionDataset":
        """Records at the given indices, in that order, without split"""
        idx = np.asarray(indices, dtype=np.intp)
        return TransitionDataset(
            x=self.x[idx], u=self.u[idx], x_next=self.x_next[idx],
            g=None if self.g is None else self.g[idx],
        )

    def train(self) -> "TransitionDataset":
        if not self.has_split:
            raise ContractViolation("Dataset has no train/test split")
        return self.subset(self.train_idx)

    def test(self) -> "TransitionDataset":
        if not self.has_split:
            raise ContractViolation("Dataset has no train/test split")
        return self.subset(self.test_idx)

    def continues_previous(self) -> np.ndarray:
        """Boolean per record: True when x[i] equals x_next[i-1] (same trajectory piece)"""
        flags = np.zeros(len(self), dtype=bool)
        if len(self) > 1:
            flags[1:] = np.all(self.x[1:] == self.x_next[:-1], axis=1)
        return flags

    def contiguous_windows(self, before: int, after: int) -> np.ndarray:
        """
        Anchors i such that records i-before .. i+after-1 lie on one uninterrupted trajectory piece
        """
        n = len(self)
        cont = self.continues_previous()
        # piece id increments at every break
        piece = np.cumsum(~cont)
        anchors = []
        for i in range(before, n - after + 1):
            lo, hi = i - before, i + after - 1
            if piece[lo] == piece[hi]:
                anchors.append(i)
        return np.asarray(anchors, dtype=np.intp)


def collect_dataset(n: int, dt: float = DEFAULT_DT, input_low: float = -0.5, input_high: float = 0.5,
                    seed: int = 0, x0: Sequence[float] = DEFAULT_X0,
                    collection_box: Box = COLLECTION_BOX, restart_box: Optional[Box] = None,
                    substeps: int = DEFAULT_SUBSTEPS) -> TransitionDataset:
    """
    Record n transitions of one trajectory under i.i.d. uniform inputs

    The open-loop plant is unstable, so whenever the next state leaves the
    collection box or integration diverges, that transition is dropped and the
    trajectory restarts from a state drawn uniformly inside the restart box
    (default: the collection box).

    Args:
        n: Number of transitions to record
        dt: Sampling time
        input_low: Lower bound of the uniform input distribution (both inputs)
        input_high: Upper bound of the uniform input distribution
        seed: Seed of the numpy Generator driving inputs and restarts
        x0: Initial state
        collection_box: Box the trajectory must stay in
        restart_box: Box restart states are drawn from; must lie inside the state box
        substeps: RK4 substeps per sample

    Returns:
        TransitionDataset without targets or split
    """
    if n < 1:
        raise ContractViolation(f"n must be >= 1, got {n}")
    if input_low > input_high:
        raise ContractViolation(f"Invalid input bounds [{input_low}, {input_high}]")
    box = collection_box
    restart_box = restart_box if restart_box is not None else box
    if not (STATE_BOX.contains(restart_box.lower) and STATE_BOX.contains(restart_box.upper)):
        raise ContractViolation(f"Restart box {restart_box} must lie inside the state box {STATE_BOX}")
    rng = np.random.default_rng(seed)

    xs = np.empty((n, 2))
    us = np.empty((n, 2))
    nexts = np.empty((n, 2))
    state = np.asarray(x0, dtype=np.float64).reshape(2).copy()
    recorded = 0
    restarts = 0
    while recorded < n:
        u = rng.uniform(input_low, input_high, size=2)
        try:
            nxt = step(state, u, dt, substeps)
        except DivergenceError:
            nxt = None
        if nxt is None or not box.contains(nxt):
            state = restart_box.sample(rng)
            restarts += 1
            continue
        xs[recorded], us[recorded], nexts[recorded] = state, u, nxt
        recorded += 1
        state = nxt

    logger.info(f"Collected {n} transitions (dt={dt}, seed={seed}, restarts={restarts})")
    return TransitionDataset(x=xs, u=us, x_next=nexts)


def split_dataset(d: TransitionDataset, train_fraction: float = 0.75, seed: int = 0) -> TransitionDataset:
    """Attach a random disjoint train/test split"""
    if not 0.0 < train_fraction < 1.0:
        raise ContractViolation(f"train_fraction must lie in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(d))
    n_train = int(round(train_fraction * len(d)))
    train_idx, test_idx = np.sort(order[:n_train]), np.sort(order[n_train:])
    logger.info(f"Split {len(d)} records into {len(train_idx)} train / {len(test_idx)} test")
    return replace(d, train_idx=train_idx, test_idx=test_idx)


def build_mismatch_dataset(d: TransitionDataset, f: NominalMap) -> TransitionDataset:
    """Populate g = x_next - f(x, u) for every record"""
    predicted = np.asarray(f(d.x, d.u), dtype=np.float64).reshape(-1, 2)
    if predicted.shape != d.x.shape:
        raise ContractViolation(f"Nominal map returned shape {predicted.shape}, expected {d.x.shape}")
    g = d.x_next - predicted
    logger.info(f"Mismatch targets: max |g1| = {np.max(np.abs(g[:, 0])):.4f}, "
                f"max |g2| = {np.max(np.abs(g[:, 1])):.4f}")
    return replace(d, g=g)


def mismatch_bounds(d: TransitionDataset) -> Tuple[float, float]:
    """Empirical worst-case magnitude of each mismatch component"""
    if d.g is None:
        raise ContractViolation("Dataset has no mismatch targets")
    return float(np.max(np.abs(d.g[:, 0]))), float(np.max(np.abs(d.g[:, 1])))
