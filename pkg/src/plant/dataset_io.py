#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
CSV persistence for transition datasets
Fixed column order, 17 significant digits so every float round-trips exactly
"""

import csv
import json
import logging
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from ..errors import ContractViolation
from .dataset import TransitionDataset

logger = logging.getLogger(__name__)

DATASET_COLUMNS = ["x1", "x2", "u1", "u2", "x1_next", "x2_next", "g1", "g2"]


def format_float(value: float) -> str:
    """17 significant digits: enough for an exact float64 round trip"""
    return f"{float(value):.17g}"


def validate_dataset_csv(file_path: Path) -> Tuple[bool, str]:
    """
    Validate that a CSV file has the dataset layout

    Args:
        file_path: Path to the CSV file

    Returns:
        Tuple of (is_valid, message)
    """
    try:
        if not file_path.exists():
            return False, f"Dataset file does not exist: {file_path}"
        if not file_path.is_file():
            return False, f"Not a file: {file_path}"
        if file_path.stat().st_size == 0:
            return False, "Dataset file is empty"

        with open(file_path, "r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header != DATASET_COLUMNS:
                return False, f"Unexpected header {header}, expected {DATASET_COLUMNS}"
            for row_num, row in enumerate(reader, 2):
                if len(row) != len(DATASET_COLUMNS):
                    return False, f"Row {row_num} has {len(row)} columns"
        return True, "Dataset file validated"

    except UnicodeDecodeError:
        return False, "Dataset file is not UTF-8"
    except csv.Error as e:
        return False, f"CSV format error: {e}"


def write_dataset_csv(d: TransitionDataset, file_path: Path) -> Path:
    """Write records in the fixed column order; g cells stay empty when absent"""
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(DATASET_COLUMNS)
        for i in range(len(d)):
            row = [*d.x[i], *d.u[i], *d.x_next[i]]
            cells = [format_float(v) for v in row]
            if d.g is not None:
                cells += [format_float(v) for v in d.g[i]]
            else:
                cells += ["", ""]
            writer.writerow(cells)
    logger.info(f"Wrote {len(d)} records to {file_path}")
    return file_path


def read_dataset_csv(file_path: Path, split_path: Optional[Path] = None) -> TransitionDataset:
    """Load a dataset, optionally attaching the split stored next to it"""
    is_valid, message = validate_dataset_csv(file_path)
    if not is_valid:
        raise ContractViolation(message)

    rows: List[List[str]] = []
    with open(file_path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        next(reader)
        rows.extend(reader)

    numeric = np.array([[float(c) for c in row[:6]] for row in rows], dtype=np.float64).reshape(-1, 6)
    g_cells = [row[6:] for row in rows]
    has_g = bool(rows) and all(c1 != "" and c2 != "" for c1, c2 in g_cells)
    if not has_g and any(c1 != "" or c2 != "" for c1, c2 in g_cells):
        raise ContractViolation(f"{file_path}: mismatch targets present on some rows only")
    g = np.array([[float(c1), float(c2)] for c1, c2 in g_cells]) if has_g else None

    train_idx = test_idx = None
    if split_path is not None and split_path.exists():
        with open(split_path, "r", encoding="utf-8") as f:
            split = json.load(f)
        train_idx, test_idx = split["train"], split["test"]

    logger.debug(f"Read {len(rows)} records from {file_path}")
    return TransitionDataset(
        x=numeric[:, 0:2], u=numeric[:, 2:4], x_next=numeric[:, 4:6], g=g,
        train_idx=train_idx, test_idx=test_idx,
    )


def write_split_json(d: TransitionDataset, file_path: Path) -> Path:
    if not d.has_split:
        raise ContractViolation("Dataset has no train/test split to write")
    with open(file_path, "w", encoding="utf-8") as f:
        json.dump({"train": d.train_idx.tolist(), "test": d.test_idx.tolist()}, f)
    return file_path
