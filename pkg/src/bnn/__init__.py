# -*- coding: utf-8 -*-
"""
Bayesian mismatch model: priors, variational head, training and prediction
"""

from .priors import (
    LOG_2PI,
    FrozenPosterior,
    GaussianPrior,
    MixturePrior,
    gaussian_log_density,
    prior_from_dict,
)
from .model import (
    HEAD_PARAM_COUNT,
    HEAD_PARAM_ORDER,
    HEAD_SHAPES,
    AnnModel,
    BnnModel,
    VariationalPosterior,
    draw_head_weights,
    forward,
    forward_numpy,
    forward_tensor,
    init_ann,
    inverse_softplus,
    regressor_matrix,
    sample_weights,
    split_head_vector,
)
from .training import (
    DEFAULT_SIGMA_OBS,
    TrainingResult,
    elbo_gradients,
    elbo_loss,
    gaussian_nll,
    gaussian_nll_numpy,
    mc_draws,
    mc_stats,
    predict_interval,
    pretrain_ann,
    summarize_draws,
    train_bnn,
    validation_nll,
)

__all__ = [
    'LOG_2PI',
    'FrozenPosterior',
    'GaussianPrior',
    'MixturePrior',
    'gaussian_log_density',
    'prior_from_dict',
    'HEAD_PARAM_COUNT',
    'HEAD_PARAM_ORDER',
    'HEAD_SHAPES',
    'AnnModel',
    'BnnModel',
    'VariationalPosterior',
    'draw_head_weights',
    'forward',
    'forward_numpy',
    'forward_tensor',
    'init_ann',
    'inverse_softplus',
    'regressor_matrix',
    'sample_weights',
    'split_head_vector',
    'DEFAULT_SIGMA_OBS',
    'TrainingResult',
    'elbo_gradients',
    'elbo_loss',
    'gaussian_nll',
    'gaussian_nll_numpy',
    'mc_draws',
    'mc_stats',
    'predict_interval',
    'pretrain_ann',
    'summarize_draws',
    'train_bnn',
    'validation_nll',
]
