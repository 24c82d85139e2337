# -*- coding: utf-8 -*-
"""
Tensor arithmetic with reverse-mode automatic differentiation
"""

from .tensor import (
    Tensor,
    Tape,
    Gradients,
    PRIMITIVES,
    as_tensor,
    forward_primitive,
    add,
    sub,
    mul,
    div,
    neg,
    matmul,
    elu,
    softplus,
    relu,
    square,
    exp,
    log,
    logaddexp,
    mean,
    sum,
    reshape,
    transpose,
    take,
    concat,
)
from .optim import Adam

__all__ = [
    'Tensor',
    'Tape',
    'Gradients',
    'PRIMITIVES',
    'as_tensor',
    'forward_primitive',
    'add',
    'sub',
    'mul',
    'div',
    'neg',
    'matmul',
    'elu',
    'softplus',
    'relu',
    'square',
    'exp',
    'log',
    'logaddexp',
    'mean',
    'sum',
    'reshape',
    'transpose',
    'take',
    'concat',
    'Adam',
]
