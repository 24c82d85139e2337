# -*- coding: utf-8 -*-
"""
Run-log CSV and summary JSON
"""

import csv
import json
import logging
from pathlib import Path
from typing import Dict, List

from ..errors import ContractViolation
from ..plant.dataset_io import format_float
from .harness import ClosedLoopLog

logger = logging.getLogger(__name__)

RUN_COLUMNS = [
    "k", "x1", "x2", "u1", "u2", "g1_real", "g2_real", "g1_mean", "g2_mean", "g1_std", "g2_std",
    "scen_lo_g1", "scen_hi_g1", "scen_lo_g2", "scen_hi_g2", "contained", "cost_step",
    "viol_x", "viol_u", "solver_iters", "solver_cost",
]


def write_run_csv(log: ClosedLoopLog, file_path: Path) -> Path:
    """One row per step in RUN_COLUMNS order; no wall-clock values"""
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RUN_COLUMNS)
        for r in log.records:
            lo, hi = r.scenarios.lower, r.scenarios.upper
            writer.writerow([
                r.k,
                *(format_float(v) for v in (*r.x, *r.u, *r.g_real, *r.g_mean, *r.g_std)),
                format_float(lo[0]), format_float(hi[0]), format_float(lo[1]), format_float(hi[1]),
                int(r.contained), format_float(r.cost_step), format_float(r.viol_x), format_float(r.viol_u),
                r.solver_iters, format_float(r.solver_cost),
            ])
    logger.info(f"Wrote {len(log)} closed-loop steps to {file_path}")
    return file_path


def read_run_csv(file_path: Path) -> List[Dict[str, float]]:
    """Rows as dicts of floats (k, contained and solver_iters as ints)"""
    with open(file_path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != RUN_COLUMNS:
            raise ContractViolation(f"Run log {file_path} has columns {reader.fieldnames}, expected {RUN_COLUMNS}")
        rows = []
        for row in reader:
            parsed = {}
            for name, cell in row.items():
                parsed[name] = int(cell) if name in ("k", "contained", "solver_iters") else float(cell)
            rows.append(parsed)
    return rows


def write_summary_json(data: Dict, file_path: Path) -> Path:
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    return file_path
