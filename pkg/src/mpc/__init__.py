# -*- coding: utf-8 -*-
"""
Scenario-tree model predictive control
"""

from .ocp import (
    DEFAULT_HORIZON,
    PENALTY_WEIGHTS,
    OcpSolution,
    OcpSpec,
    objective_and_gradient,
    objective_tensor,
    rollout,
    solve,
    state_violation,
)

__all__ = [
    'DEFAULT_HORIZON',
    'PENALTY_WEIGHTS',
    'OcpSolution',
    'OcpSpec',
    'objective_and_gradient',
    'objective_tensor',
    'rollout',
    'solve',
    'state_violation',
]
