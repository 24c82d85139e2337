# -*- coding: utf-8 -*-
"""
Nominal LPV model identification and validation
"""

from .lpv import (
    LpvModel,
    BfrScore,
    scheduling,
    regressors,
    eval_nominal,
    fit_lpv,
    bfr,
    one_step_bfr,
    free_run,
)

__all__ = [
    'LpvModel',
    'BfrScore',
    'scheduling',
    'regressors',
    'eval_nominal',
    'fit_lpv',
    'bfr',
    'one_step_bfr',
    'free_run',
]
