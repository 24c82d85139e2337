# -*- coding: utf-8 -*-
"""
Scenario-tree optimal control problem with robust horizon 1

Every scenario keeps its mismatch realization fixed over the horizon. The
first input is one shared decision (non-anticipativity); each scenario then
owns its inputs for steps 1..N-1. The expected quadratic cost is minimized by
L-BFGS-B over the input box, with state constraints as a quadratic penalty
whose weight escalates over several rounds.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Protocol, Tuple

import numpy as np
from scipy.optimize import minimize

from .. import autodiff as ad
from ..errors import ContractViolation, DivergenceError, NonFiniteError
from ..plant.dynamics import INPUT_BOX, STATE_BOX, Box

logger = logging.getLogger(__name__)

DEFAULT_HORIZON = 7
PENALTY_WEIGHTS = (1e2, 1e4, 1e6)
MAX_ITERATIONS = 200
GRADIENT_TOL = 1e-6
DESCENT_TOL = 1e-10


class NominalModel(Protocol):
    def __call__(self, x: np.ndarray, u: np.ndarray) -> np.ndarray: ...

    def forward_tensor(self, X: ad.Tensor, U: ad.Tensor) -> ad.Tensor: ...


def _psd(name: str, matrix) -> np.ndarray:
    matrix = np.array(matrix, dtype=np.float64)
    if matrix.shape != (2, 2):
        raise ContractViolation(f"{name} must be 2x2, got {matrix.shape}")
    if not np.allclose(matrix, matrix.T):
        raise ContractViolation(f"{name} must be symmetric")
    if np.min(np.linalg.eigvalsh(matrix)) < -1e-12:
        raise ContractViolation(f"{name} must be positive semidefinite")
    matrix.flags.writeable = False
    return matrix


@dataclass(frozen=True, eq=False)
class OcpSpec:
    """One scenario-tree problem instance"""

    nominal: NominalModel
    scenarios: np.ndarray
    probs: np.ndarray
    horizon: int = DEFAULT_HORIZON
    Q: np.ndarray = field(default_factory=lambda: np.eye(2))
    R: np.ndarray = field(default_factory=lambda: 100.0 * np.eye(2))
    P: np.ndarray = field(default_factory=lambda: np.eye(2))
    state_box: Box = STATE_BOX
    input_box: Box = INPUT_BOX
    penalty_weights: Tuple[float, ...] = PENALTY_WEIGHTS
    max_iterations: int = MAX_ITERATIONS

    def __post_init__(self):
        if self.horizon < 1:
            raise ContractViolation(f"Horizon must be >= 1, got {self.horizon}")
        scenarios = np.array(self.scenarios, dtype=np.float64).reshape(-1, 2)
        probs = np.array(self.probs, dtype=np.float64).reshape(-1)
        if len(scenarios) != len(probs) or len(probs) == 0:
            raise ContractViolation(f"{len(scenarios)} scenarios but {len(probs)} probabilities")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ContractViolation(f"Scenario probabilities {probs.tolist()} are not on the simplex")
        if not self.penalty_weights:
            raise ContractViolation("Need at least one penalty round")
        for array in (scenarios, probs):
            array.flags.writeable = False
        object.__setattr__(self, "scenarios", scenarios)
        object.__setattr__(self, "probs", probs)
        for name in ("Q", "R", "P"):
            object.__setattr__(self, name, _psd(name, getattr(self, name)))

    @property
    def n_scenarios(self) -> int:
        return len(self.probs)

    @property
    def n_decisions(self) -> int:
        """Rows of the decision matrix: shared u(0) plus N-1 inputs per scenario"""
        return 1 + self.n_scenarios * (self.horizon - 1)

    def expand(self, decisions: np.ndarray) -> np.ndarray:
        """Decision matrix -> (S, N, 2) input sequences"""
        decisions = np.asarray(decisions, dtype=np.float64).reshape(self.n_decisions, 2)
        S, N = self.n_scenarios, self.horizon
        inputs = np.empty((S, N, 2))
        inputs[:, 0] = decisions[0]
        if N > 1:
            inputs[:, 1:] = decisions[1:].reshape(S, N - 1, 2)
        return inputs

    def compress(self, inputs: np.ndarray) -> np.ndarray:
        """(S, N, 2) sequences sharing u(0) -> decision matrix"""
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.shape != (self.n_scenarios, self.horizon, 2):
            raise ContractViolation(f"Inputs must be {(self.n_scenarios, self.horizon, 2)}, got {inputs.shape}")
        if np.any(inputs[:, 0] != inputs[0, 0]):
            raise ContractViolation("Scenario input sequences must share their first input")
        return np.vstack([inputs[0, :1], inputs[:, 1:].reshape(-1, 2)])


@dataclass(frozen=True, eq=False)
class OcpSolution:
    u0: np.ndarray
    inputs: np.ndarray
    states: np.ndarray
    cost: float
    penalized_cost: float
    iterations: int
    max_state_violation: float
    fallback: bool = False
    converged: bool = True
    wall_time: float = 0.0

    def next_input(self, probs: np.ndarray) -> np.ndarray:
        """Probability-weighted u(1|k), the input guess for the next step's mismatch estimate"""
        if self.inputs.shape[1] < 2:
            return self.u0.copy()
        return np.asarray(probs) @ self.inputs[:, 1]

    def shifted(self) -> np.ndarray:
        """Warm-start sequences: drop u(0), repeat the last input"""
        return np.concatenate([self.inputs[:, 1:], self.inputs[:, -1:]], axis=1)


def rollout(spec: OcpSpec, x0, inputs: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Per-scenario state sequences and the exact expected cost

    Args:
        spec: Problem instance
        x0: Root state shared by all scenarios
        inputs: (S, N, 2) input sequences with identical first rows

    Returns:
        (S, N+1, 2) states and sum_j p_j [sum_i x'Qx + u'Ru + x_N' P x_N]
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    S, N = spec.n_scenarios, spec.horizon
    if inputs.shape != (S, N, 2):
        raise ContractViolation(f"Inputs must be {(S, N, 2)}, got {inputs.shape}")
    if np.any(inputs[:, 0] != inputs[0, 0]):
        raise ContractViolation("Scenario input sequences must share their first input")
    states = np.empty((S, N + 1, 2))
    states[:, 0] = np.asarray(x0, dtype=np.float64).reshape(2)
    for i in range(N):
        states[:, i + 1] = spec.nominal(states[:, i], inputs[:, i]) + spec.scenarios
        if not np.all(np.isfinite(states[:, i + 1])):
            raise DivergenceError(f"OCP rollout diverged at step {i + 1}", last_state=states[0, i])
    stage_x = np.einsum("sni,ij,snj->s", states[:, :N], spec.Q, states[:, :N])
    stage_u = np.einsum("sni,ij,snj->s", inputs, spec.R, inputs)
    terminal = np.einsum("si,ij,sj->s", states[:, N], spec.P, states[:, N])
    return states, float(spec.probs @ (stage_x + stage_u + terminal))


def state_violation(spec: OcpSpec, states: np.ndarray) -> float:
    """Largest state-box excess over predicted steps 1..N"""
    return max(spec.state_box.violation(s) for s in states[:, 1:].reshape(-1, 2))


def _quadratic_rows(X: ad.Tensor, weight: np.ndarray) -> ad.Tensor:
    return ad.sum(ad.mul(ad.matmul(X, ad.Tensor(weight)), X), axis=1)


def objective_tensor(spec: OcpSpec, x0, decisions: ad.Tensor, penalty_weight: float) -> ad.Tensor:
    """Penalized expected cost as a scalar tensor of the (1 + S(N-1), 2) decision matrix"""
    S, N = spec.n_scenarios, spec.horizon
    ones = np.ones((S, 1))
    X = ad.Tensor(np.repeat(np.asarray(x0, dtype=np.float64).reshape(1, 2), S, axis=0))
    G = ad.Tensor(spec.scenarios)
    lower = ad.Tensor(np.repeat(spec.state_box.lower_array.reshape(1, 2), S, axis=0))
    upper = ad.Tensor(np.repeat(spec.state_box.upper_array.reshape(1, 2), S, axis=0))

    per_scenario = None
    violation = None
    for i in range(N):
        if i == 0:
            U = ad.matmul(ones, ad.take(decisions, [0], axis=0))
        else:
            U = ad.take(decisions, [1 + j * (N - 1) + (i - 1) for j in range(S)], axis=0)
        stage = ad.add(_quadratic_rows(X, spec.Q), _quadratic_rows(U, spec.R))
        per_scenario = stage if per_scenario is None else ad.add(per_scenario, stage)
        X = ad.add(spec.nominal.forward_tensor(X, U), G)
        excess = ad.add(ad.square(ad.relu(ad.sub(X, upper))), ad.square(ad.relu(ad.sub(lower, X))))
        step_violation = ad.sum(excess, axis=1)
        violation = step_violation if violation is None else ad.add(violation, step_violation)
    per_scenario = ad.add(per_scenario, _quadratic_rows(X, spec.P))
    weights = ad.Tensor(spec.probs.reshape(1, -1))
    cost = ad.sum(ad.matmul(weights, per_scenario))
    penalty = ad.sum(ad.matmul(weights, violation))
    return ad.add(cost, ad.mul(penalty_weight, penalty))


def objective_and_gradient(spec: OcpSpec, x0, decisions: np.ndarray, penalty_weight: float) -> Tuple[float, np.ndarray]:
    tape = ad.Tape()
    D = tape.watch(np.asarray(decisions, dtype=np.float64).reshape(spec.n_decisions, 2), name="decisions")
    try:
        value = objective_tensor(spec, x0, D, penalty_weight)
    except NonFiniteError as e:
        raise DivergenceError(f"OCP objective is not finite: {e}", last_state=np.asarray(x0).reshape(-1)) from e
    grads = tape.backward(value)
    return value.item(), grads[D]


def _warm_decisions(spec: OcpSpec, warm_start: Optional[np.ndarray]) -> np.ndarray:
    """Decision matrix from shifted previous sequences; zeros when unusable"""
    if warm_start is None:
        return np.zeros((spec.n_decisions, 2))
    warm = np.asarray(warm_start, dtype=np.float64)
    if warm.shape != (spec.n_scenarios, spec.horizon, 2):
        logger.debug(f"Warm start shape {warm.shape} does not fit; starting from zero inputs")
        return np.zeros((spec.n_decisions, 2))
    warm = spec.input_box.clamp(warm)
    warm[:, 0] = spec.input_box.clamp(spec.probs @ warm[:, 0])
    return spec.compress(warm)


def solve(spec: OcpSpec, x0, warm_start: Optional[np.ndarray] = None) -> OcpSolution:
    """
    Minimize the penalized expected cost over the input box

    Args:
        spec: Problem instance
        x0: Measured state (may lie outside the state box)
        warm_start: (S, N, 2) sequences, usually OcpSolution.shifted() of the last step

    Returns:
        OcpSolution; `fallback` is set when the optimizer could not beat the warm start
    """
    x0 = np.asarray(x0, dtype=np.float64).reshape(2)
    if not np.all(np.isfinite(x0)):
        raise DivergenceError("OCP initial state is not finite", last_state=x0)
    started = time.perf_counter()
    lower = np.tile(spec.input_box.lower_array, spec.n_decisions)
    upper = np.tile(spec.input_box.upper_array, spec.n_decisions)
    bounds = list(zip(lower, upper))

    start = _warm_decisions(spec, warm_start)
    z = start.reshape(-1)
    iterations = 0
    converged = True
    for weight in spec.penalty_weights:
        def fun(flat, weight=weight):
            value, grad = objective_and_gradient(spec, x0, flat, weight)
            return value, grad.reshape(-1)

        result = minimize(fun, z, jac=True, method="L-BFGS-B", bounds=bounds,
                          options={"maxiter": spec.max_iterations, "gtol": GRADIENT_TOL})
        z = np.clip(result.x, lower, upper)
        iterations += int(result.nit)
        converged = converged and bool(result.success)

    final_weight = spec.penalty_weights[-1]
    value, _ = objective_and_gradient(spec, x0, z, final_weight)
    start_value, _ = objective_and_gradient(spec, x0, start, final_weight)
    fallback = value > start_value + DESCENT_TOL
    if fallback:
        logger.warning(f"OCP solver did not improve on the warm start ({value:.6g} > {start_value:.6g}); "
                       f"keeping the warm start")
        z, value = start.reshape(-1), start_value

    inputs = spec.expand(z)
    states, cost = rollout(spec, x0, inputs)
    solution = OcpSolution(
        u0=inputs[0, 0].copy(), inputs=inputs, states=states, cost=cost, penalized_cost=value,
        iterations=iterations, max_state_violation=state_violation(spec, states),
        fallback=fallback, converged=converged, wall_time=time.perf_counter() - started,
    )
    logger.debug(f"OCP solved: cost={cost:.6g} iterations={iterations} "
                 f"violation={solution.max_state_violation:.3g} time={solution.wall_time:.3f}s")
    return solution

