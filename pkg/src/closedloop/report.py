# -*- coding: utf-8 -*-
"""
Safety and performance summaries of closed-loop logs
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict

import numpy as np

from ..errors import ContractViolation
from .harness import ClosedLoopLog

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SafetyReport:
    """Empirical constraint satisfaction, envelope containment and cost of one run"""

    steps: int
    constraint_fraction: float
    containment_rate: float
    cost: float
    final_state_norm: float
    fallback_steps: int
    aborted: bool

    def __post_init__(self):
        for name in ("constraint_fraction", "containment_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ContractViolation(f"{name} must lie in [0, 1], got {value}")

    def to_dict(self) -> Dict:
        return asdict(self)


def safety_report(log: ClosedLoopLog) -> SafetyReport:
    """
    Summarize one run

    A step counts as safe when x(k) is in the state box and u(k) in the input
    box. Containment means the realized mismatch lies inside the componentwise
    envelope of that step's scenarios.
    """
    if len(log) == 0:
        raise ContractViolation("Cannot report on an empty closed-loop log")
    safe = [r.viol_x == 0.0 and r.viol_u == 0.0 for r in log.records]
    contained = [r.contained for r in log.records]
    final = log.records[-1].x_next
    report = SafetyReport(
        steps=len(log),
        constraint_fraction=float(np.mean(safe)),
        containment_rate=float(np.mean(contained)),
        cost=float(sum(r.cost_step for r in log.records)),
        final_state_norm=float(np.max(np.abs(final))),
        fallback_steps=int(sum(r.fallback for r in log.records)),
        aborted=log.aborted_at is not None,
    )
    logger.info(f"Run '{log.model}': safe={report.constraint_fraction:.3f} "
                f"contained={report.containment_rate:.3f} cost={report.cost:.6g}")
    return report


def tail_state_norm(log: ClosedLoopLog, start: int) -> float:
    """Largest infinity norm of x(k) over logged steps k >= start"""
    tail = [np.max(np.abs(r.x)) for r in log.records if r.k >= start]
    if not tail:
        raise ContractViolation(f"Log has no steps at or after k={start}")
    return float(max(tail))


def settled(log: ClosedLoopLog, threshold: float, component: int = 0) -> bool:
    """Whether |x_component| reached the threshold at some step"""
    return any(abs(r.x[component]) <= threshold for r in log.records)


@dataclass(frozen=True)
class RunComparison:
    maml: SafetyReport
    global_: SafetyReport
    cost_difference: float
    maml_cheaper: bool
    global_x1_settled: bool

    def to_dict(self) -> Dict:
        return {
            "maml": self.maml.to_dict(),
            "global": self.global_.to_dict(),
            "cost_difference": self.cost_difference,
            "maml_cheaper": self.maml_cheaper,
            "global_x1_settled": self.global_x1_settled,
        }


def compare_runs(log_maml: ClosedLoopLog, log_global: ClosedLoopLog, settle_threshold: float = 0.1) -> RunComparison:
    """Side-by-side reports; the two logs must come from identical settings"""
    if log_maml.config != log_global.config:
        differing = sorted(k for k in set(log_maml.config) | set(log_global.config)
                           if log_maml.config.get(k) != log_global.config.get(k))
        raise ContractViolation(f"Closed-loop logs were produced with different settings: {differing}")
    maml = safety_report(log_maml)
    global_ = safety_report(log_global)
    comparison = RunComparison(
        maml=maml, global_=global_, cost_difference=maml.cost - global_.cost,
        maml_cheaper=maml.cost < global_.cost,
        global_x1_settled=settled(log_global, settle_threshold),
    )
    if not comparison.global_x1_settled:
        logger.info(f"Global model run never brought |x1| below {settle_threshold}")
    return comparison
