# -*- coding: utf-8 -*-
"""
Ground-truth plant: two-state input-affine nonlinear system, integrated with RK4
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from ..errors import ContractViolation, DivergenceError

logger = logging.getLogger(__name__)

DEFAULT_DT = 0.1
DEFAULT_SUBSTEPS = 10


@dataclass(frozen=True)
class Box:
    """Axis-aligned box {z : lower <= z <= upper}"""

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ContractViolation("Box bounds must have equal length")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ContractViolation(f"Box lower bound exceeds upper bound: {self.lower} > {self.upper}")

    @property
    def lower_array(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=np.float64)

    @property
    def upper_array(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=np.float64)

    def contains(self, z) -> bool:
        z = np.asarray(z, dtype=np.float64)
        return bool(np.all(z >= self.lower_array) and np.all(z <= self.upper_array))

    def violation(self, z) -> float:
        """Largest componentwise distance outside the box (0 when inside)"""
        z = np.asarray(z, dtype=np.float64)
        excess = np.maximum(z - self.upper_array, self.lower_array - z)
        return float(max(0.0, np.max(excess)))

    def clamp(self, z) -> np.ndarray:
        return np.clip(np.asarray(z, dtype=np.float64), self.lower_array, self.upper_array)

    def scaled(self, factor: float) -> "Box":
        return Box(tuple(factor * v for v in self.lower), tuple(factor * v for v in self.upper))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower_array, self.upper_array)


STATE_BOX = Box((-5.0, 0.0), (3.0, 10.0))
INPUT_BOX = Box((-1.0, -1.0), (1.0, 1.0))


@dataclass(frozen=True)
class PlantState:
    x1: float
    x2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2], dtype=np.float64)


@dataclass(frozen=True)
class ControlInput:
    u1: float
    u2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.u1, self.u2], dtype=np.float64)


Vector = Union[PlantState, ControlInput, Sequence[float], np.ndarray]


def _vec(v: Vector) -> np.ndarray:
    if isinstance(v, (PlantState, ControlInput)):
        return v.as_array()
    return np.asarray(v, dtype=np.float64).reshape(2)


def plant_derivative(x: Vector, u: Vector) -> np.ndarray:
    """Continuous-time vector field of the plant"""
    x1, x2 = _vec(x)
    u1, u2 = _vec(u)
    return np.array([
        10.0 * x1 - x1 * x2 ** 2 + 0.5 * x1 ** 2 + 0.5 * x1 * u1 + 0.5 * u2,
        -x2 + 0.1 * x1 ** 2 + 3.0 * x1 ** 2 * x2 - x1 * x2 * u1,
    ])


def step(x: Vector, u: Vector, dt: float = DEFAULT_DT, substeps: int = DEFAULT_SUBSTEPS) -> np.ndarray:
    """
    Advance the plant over one sampling interval under zero-order hold

    Args:
        x: State at the start of the interval
        u: Input, clamped to the input box before application
        dt: Sampling time in seconds
        substeps: Number of equal RK4 substeps

    Returns:
        State at the end of the interval

    Raises:
        DivergenceError: An intermediate state became non-finite
    """
    if dt <= 0:
        raise ContractViolation(f"dt must be positive, got {dt}")
    if substeps < 1:
        raise ContractViolation(f"substeps must be >= 1, got {substeps}")
    state = _vec(x).copy()
    held = INPUT_BOX.clamp(_vec(u))
    h = dt / substeps
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(substeps):
            k1 = plant_derivative(state, held)
            k2 = plant_derivative(state + 0.5 * h * k1, held)
            k3 = plant_derivative(state + 0.5 * h * k2, held)
            k4 = plant_derivative(state + h * k3, held)
            candidate = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(candidate)):
                raise DivergenceError(f"Plant integration diverged from state {state.tolist()}", last_state=state)
            state = candidate
    return state


def simulate(x0: Vector, inputs: np.ndarray, dt: float = DEFAULT_DT, substeps: int = DEFAULT_SUBSTEPS) -> np.ndarray:
    """Open-loop trajectory; row k+1 is the state after inputs[k]"""
    inputs = np.asarray(inputs, dtype=np.float64).reshape(-1, 2)
    states = np.empty((len(inputs) + 1, 2))
    states[0] = _vec(x0)
    for k, u in enumerate(inputs):
        states[k + 1] = step(states[k], u, dt, substeps)
    return states
