# -*- coding: utf-8 -*-
"""
Plot-ready CSV export: one file per figure panel set
"""

import csv
import logging
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

from ..bnn.model import BnnModel
from ..bnn.training import predict_interval
from ..closedloop.log_io import read_run_csv
from ..meta.adaptation import MetaKnowledge, TrajectoryWindow, valid_anchors
from ..nominal.lpv import LpvModel
from ..plant.dataset import TransitionDataset
from ..plant.dataset_io import format_float

logger = logging.getLogger(__name__)

NOMINAL_FIT_COLUMNS = ["index", "x1", "x2", "x1_pred", "x2_pred"]
MISMATCH_COLUMNS = [
    "index", "g1", "g2",
    "global_g1_mean", "global_g1_lo", "global_g1_hi", "global_g2_mean", "global_g2_lo", "global_g2_hi",
    "adapted_g1_mean", "adapted_g1_lo", "adapted_g1_hi", "adapted_g2_mean", "adapted_g2_lo", "adapted_g2_hi",
]
TRAJECTORY_COLUMNS = ["k", "x1", "x2", "u1", "u2", "scen_lo_g1", "scen_hi_g1", "scen_lo_g2", "scen_hi_g2"]


def _write_rows(file_path: Path, header: Sequence[str], rows: Iterable[List]) -> Path:
    file_path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(file_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, (int, np.integer)) else format_float(v) for v in row])
            count += 1
    logger.info(f"Exported {count} rows to {file_path}")
    return file_path


def export_nominal_fit(m: LpvModel, test: TransitionDataset, file_path: Path) -> Path:
    """One-step nominal predictions against the recorded next states"""
    predicted = m(test.x, test.u)
    rows = ([i, *test.x_next[i], *predicted[i]] for i in range(len(test)))
    return _write_rows(file_path, NOMINAL_FIT_COLUMNS, rows)


def export_mismatch_bands(mk: MetaKnowledge, global_model: BnnModel, data: TransitionDataset,
                          file_path: Path, n_mc: int, c: float, seed: int) -> Path:
    """Global and adapted mean -/+ c std of g along a held-out trajectory"""
    rows = []
    for i in valid_anchors(data, mk.window_length, 1):
        i = int(i)
        adapted = mk.adapted_model(TrajectoryWindow.from_dataset(data, i, mk.window_length))
        row = [i, *data.g[i]]
        for m in (global_model, adapted):
            mean, lo, hi = predict_interval(m, data.x[i], data.u[i], n_mc, seed=[seed, i], c=c)
            row += [mean[0], lo[0], hi[0], mean[1], lo[1], hi[1]]
        rows.append(row)
    return _write_rows(file_path, MISMATCH_COLUMNS, rows)


def export_trajectory(run_csv: Path, file_path: Path) -> Path:
    """State, input and scenario envelope columns of a closed-loop run"""
    rows = ([r[name] for name in TRAJECTORY_COLUMNS] for r in read_run_csv(run_csv))
    return _write_rows(file_path, TRAJECTORY_COLUMNS, rows)
