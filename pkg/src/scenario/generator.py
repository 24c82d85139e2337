# -*- coding: utf-8 -*-
"""
Discrete scenario sets from Monte-Carlo mismatch statistics

Scenarios are the ensemble mean plus symmetric pairs mean +/- m_j * std. The
pair probabilities are chosen so the discrete set keeps the ensemble mean and
variance; if any scenario leaves the worst-case mismatch bounds, the offending
components are clamped and the probabilities become uniform.
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from ..errors import ContractViolation, InfeasibleScenarioError

logger = logging.getLogger(__name__)

MOMENT_MATCHED = "moment-matched"
UNIFORM_FALLBACK = "uniform-fallback"
PROVENANCES = (MOMENT_MATCHED, UNIFORM_FALLBACK)
SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class UncertaintyBounds:
    """Worst-case magnitude of each mismatch component"""

    g1: float = 0.21
    g2: float = 0.85

    def __post_init__(self):
        if self.g1 <= 0 or self.g2 <= 0:
            raise ContractViolation(f"Mismatch bounds must be positive, got ({self.g1}, {self.g2})")

    def as_array(self) -> np.ndarray:
        return np.array([self.g1, self.g2])


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """S mismatch realizations (rows) with their probabilities"""

    values: np.ndarray
    probs: np.ndarray
    provenance: str = MOMENT_MATCHED

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        probs = np.array(self.probs, dtype=np.float64).reshape(-1)
        if values.ndim != 2 or values.shape[1] != 2 or len(values) != len(probs):
            raise ContractViolation(f"Scenario values {values.shape} do not match {len(probs)} probabilities")
        if len(probs) % 2 != 1:
            raise ContractViolation(f"Scenario count must be odd, got {len(probs)}")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > SIMPLEX_TOL:
            raise ContractViolation(f"Scenario probabilities {probs.tolist()} are not on the simplex")
        if self.provenance not in PROVENANCES:
            raise ContractViolation(f"Unknown scenario provenance '{self.provenance}'")
        for array in (values, probs):
            array.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)

    def __len__(self):
        return len(self.probs)

    @property
    def lower(self) -> np.ndarray:
        return self.values.min(axis=0)

    @property
    def upper(self) -> np.ndarray:
        return self.values.max(axis=0)

    def contains(self, g) -> bool:
        """Realized mismatch inside the componentwise scenario envelope"""
        g = np.asarray(g, dtype=np.float64).reshape(2)
        return bool(np.all(g >= self.lower) and np.all(g <= self.upper))

    def mean(self) -> np.ndarray:
        return self.probs @ self.values

    def variance(self) -> np.ndarray:
        return self.probs @ (self.values - self.mean()) ** 2


def moment_match_probs(multipliers: Sequence[float]) -> np.ndarray:
    """
    Probabilities [p0, p1+, p1-, p2+, p2-, ...] preserving mean and variance

    Each +/- pair gets p_j = 1 / (2 J m_j^2), so every pair carries an equal
    share of the unit variance and sum_j 2 p_j m_j^2 = 1. The center takes the
    remainder. One multiplier gives p+- = 1/(2 m^2) and p0 = 1 - 1/m^2.

    Raises:
        InfeasibleScenarioError: if the center probability would be negative
    """
    m = np.asarray(multipliers, dtype=np.float64).reshape(-1)
    if m.size == 0:
        raise ContractViolation("Need at least one scenario multiplier")
    if np.any(m <= 0):
        raise ContractViolation(f"Scenario multipliers must be positive, got {m.tolist()}")
    if len(np.unique(m)) != m.size:
        raise ContractViolation(f"Scenario multipliers must be distinct, got {m.tolist()}")
    pair = 1.0 / (2.0 * m.size * m * m)
    center = 1.0 - 2.0 * pair.sum()
    if center < -SIMPLEX_TOL:
        raise InfeasibleScenarioError(
            f"Variance constraint sum 2 p_j m_j^2 = 1 forces center probability {center:.6g} < 0 "
            f"for multipliers {m.tolist()}"
        )
    center = max(center, 0.0)
    return np.concatenate([[center], np.repeat(pair, 2)])


def scenario_values(mean, std, multipliers: Sequence[float]) -> np.ndarray:
    """Rows [mean, mean + m1 std, mean - m1 std, ...]"""
    mean = np.asarray(mean, dtype=np.float64).reshape(2)
    std = np.asarray(std, dtype=np.float64).reshape(2)
    rows = [mean]
    for m in multipliers:
        rows.append(mean + m * std)
        rows.append(mean - m * std)
    return np.vstack(rows)


def generate(mean, std, multipliers: Sequence[float] = (3.0,),
             bounds: UncertaintyBounds = UncertaintyBounds()) -> ScenarioSet:
    """
    Build the scenario set for one control step

    Args:
        mean: Monte-Carlo mean of g
        std: Monte-Carlo standard deviation of g
        multipliers: m_j of the symmetric pairs
        bounds: Worst-case |g| per component

    Returns:
        ScenarioSet; provenance uniform-fallback when any component was clamped
    """
    std = np.asarray(std, dtype=np.float64)
    if np.any(std < 0):
        raise ContractViolation(f"Mismatch std must be non-negative, got {std.tolist()}")
    probs = moment_match_probs(multipliers)
    values = scenario_values(mean, std, multipliers)
    limit = bounds.as_array()
    outside = np.abs(values) > limit
    if np.any(outside):
        values = np.clip(values, -limit, limit)
        probs = np.full(len(values), 1.0 / len(values))
        logger.debug(f"Scenario set clamped to bounds {limit.tolist()}; switching to uniform probabilities")
        return ScenarioSet(values, probs, UNIFORM_FALLBACK)
    return ScenarioSet(values, probs, MOMENT_MATCHED)


def envelope(scenarios: ScenarioSet) -> Tuple[np.ndarray, np.ndarray]:
    return scenarios.lower, scenarios.upper
