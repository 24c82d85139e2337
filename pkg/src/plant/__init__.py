# -*- coding: utf-8 -*-
"""
Plant simulation and dataset generation package
"""

from .dynamics import (
    Box,
    PlantState,
    ControlInput,
    STATE_BOX,
    INPUT_BOX,
    DEFAULT_DT,
    DEFAULT_SUBSTEPS,
    plant_derivative,
    step,
    simulate,
)
from .dataset import (
    COLLECTION_BOX,
    TransitionDataset,
    collect_dataset,
    split_dataset,
    build_mismatch_dataset,
    mismatch_bounds,
)
from .dataset_io import (
    DATASET_COLUMNS,
    format_float,
    validate_dataset_csv,
    write_dataset_csv,
    read_dataset_csv,
    write_split_json,
)

__all__ = [
    'Box',
    'PlantState',
    'ControlInput',
    'STATE_BOX',
    'INPUT_BOX',
    'DEFAULT_DT',
    'DEFAULT_SUBSTEPS',
    'plant_derivative',
    'step',
    'simulate',
    'COLLECTION_BOX',
    'TransitionDataset',
    'collect_dataset',
    'split_dataset',
    'build_mismatch_dataset',
    'mismatch_bounds',
    'DATASET_COLUMNS',
    'format_float',
    'validate_dataset_csv',
    'write_dataset_csv',
    'read_dataset_csv',
    'write_split_json',
]
