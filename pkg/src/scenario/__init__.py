# -*- coding: utf-8 -*-
"""
Scenario generation for the scenario-tree controller
"""

from .generator import (
    MOMENT_MATCHED,
    UNIFORM_FALLBACK,
    ScenarioSet,
    UncertaintyBounds,
    envelope,
    generate,
    moment_match_probs,
    scenario_values,
)

__all__ = [
    'MOMENT_MATCHED',
    'UNIFORM_FALLBACK',
    'ScenarioSet',
    'UncertaintyBounds',
    'envelope',
    'generate',
    'moment_match_probs',
    'scenario_values',
]
