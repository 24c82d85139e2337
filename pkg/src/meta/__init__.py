# -*- coding: utf-8 -*-
"""
Meta-learned online adaptation of the mismatch model
"""

from .adaptation import (
    DEFAULT_HORIZON,
    DEFAULT_WINDOW,
    MetaKnowledge,
    MetaOptions,
    MetaTrainingResult,
    TrajectoryWindow,
    UpdateLaw,
    adapt,
    adapt_tensor,
    adaptation_gain,
    kl_to_prior,
    meta_train,
    one_step_errors,
    task_gradients,
    task_loss,
    valid_anchors,
)

__all__ = [
    'DEFAULT_HORIZON',
    'DEFAULT_WINDOW',
    'MetaKnowledge',
    'MetaOptions',
    'MetaTrainingResult',
    'TrajectoryWindow',
    'UpdateLaw',
    'adapt',
    'adapt_tensor',
    'adaptation_gain',
    'kl_to_prior',
    'meta_train',
    'one_step_errors',
    'task_gradients',
    'task_loss',
    'valid_anchors',
]
