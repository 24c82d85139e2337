# -*- coding: utf-8 -*-
"""
Closed-loop run of the adaptive scenario controller

Per step: adapt the head posterior from the last M (x, u) pairs, estimate the
mismatch by Monte-Carlo sampling, build the scenario set, solve the OCP, apply
the shared first input to the plant and record everything.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from ..bnn.model import BnnModel
from ..bnn.training import mc_stats
from ..errors import ContractViolation, DivergenceError
from ..meta.adaptation import MetaKnowledge, TrajectoryWindow
from ..mpc.ocp import MAX_ITERATIONS, PENALTY_WEIGHTS, OcpSolution, OcpSpec, solve
from ..plant import dynamics
from ..plant.dataset import TransitionDataset
from ..scenario.generator import ScenarioSet, UncertaintyBounds, generate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClosedLoopConfig:
    """Settings of one closed-loop run"""

    steps: int = 150
    x0: Tuple[float, float] = (-1.0, 5.0)
    n_mc: int = 50
    multipliers: Tuple[float, ...] = (3.0,)
    bounds: Tuple[float, float] = (0.21, 0.85)
    horizon: int = 7
    q_scale: float = 1.0
    r_scale: float = 100.0
    p_scale: float = 1.0
    penalty_weights: Tuple[float, ...] = PENALTY_WEIGHTS
    max_iterations: int = MAX_ITERATIONS
    window: int = 5
    seed: int = 0
    dt: float = dynamics.DEFAULT_DT
    substeps: int = dynamics.DEFAULT_SUBSTEPS
    workers: int = 1

    def __post_init__(self):
        if self.steps < 0:
            raise ContractViolation(f"steps must be >= 0, got {self.steps}")
        if self.n_mc < 2:
            raise ContractViolation(f"n_mc must be >= 2, got {self.n_mc}")
        if self.horizon < 1:
            raise ContractViolation(f"horizon must be >= 1, got {self.horizon}")
        if min(self.q_scale, self.r_scale, self.p_scale) < 0:
            raise ContractViolation("Cost weight scales must be non-negative")
        if not self.penalty_weights or self.max_iterations < 1:
            raise ContractViolation("Need at least one penalty round and one solver iteration")

    def to_dict(self) -> Dict:
        data = asdict(self)
        # worker count does not change results
        data.pop("workers")
        return data


@dataclass(frozen=True, eq=False)
class StepRecord:
    k: int
    x: np.ndarray
    u: np.ndarray
    x_next: np.ndarray
    g_real: np.ndarray
    g_mean: np.ndarray
    g_std: np.ndarray
    scenarios: ScenarioSet
    contained: bool
    cost_step: float
    viol_x: float
    viol_u: float
    solver_iters: int
    solver_cost: float
    fallback: bool
    adapted: bool


@dataclass
class ClosedLoopLog:
    """Step records of one run plus the settings that produced it"""

    model: str
    config: Dict
    records: List[StepRecord] = field(default_factory=list)
    aborted_at: Optional[int] = None

    def __len__(self):
        return len(self.records)

    def states(self) -> np.ndarray:
        return np.array([r.x for r in self.records]).reshape(-1, 2)

    def inputs(self) -> np.ndarray:
        return np.array([r.u for r in self.records]).reshape(-1, 2)

    def online_dataset(self) -> TransitionDataset:
        """Applied transitions, usable for offline fine-tuning"""
        return TransitionDataset(
            x=self.states(), u=self.inputs(),
            x_next=np.array([r.x_next for r in self.records]).reshape(-1, 2),
        )


def _cost_matrices(config: ClosedLoopConfig) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    eye = np.eye(2)
    return config.q_scale * eye, config.r_scale * eye, config.p_scale * eye


def run_closed_loop(
    model: Union[MetaKnowledge, BnnModel],
    nominal,
    config: ClosedLoopConfig = ClosedLoopConfig(),
    adapt: bool = True,
    label: Optional[str] = None,
) -> ClosedLoopLog:
    """
    Drive the plant with the scenario controller

    Args:
        model: MetaKnowledge (adapted each step when `adapt`) or a fixed BnnModel
        nominal: LPV model used inside the OCP and for realized mismatch
        config: Run settings
        adapt: Disable to run MetaKnowledge with its global posterior
        label: Model name stored in the log

    Returns:
        ClosedLoopLog with one record per completed step
    """
    adapting = isinstance(model, MetaKnowledge) and adapt
    if isinstance(model, MetaKnowledge) and model.window_length != config.window:
        raise ContractViolation(f"Update law window {model.window_length} differs from configured {config.window}")
    fixed_model = model.global_model() if isinstance(model, MetaKnowledge) else model
    if label is None:
        label = "maml" if adapting else "global"
    log = ClosedLoopLog(model=label, config=config.to_dict())
    Q, R, P = _cost_matrices(config)
    bounds = UncertaintyBounds(*config.bounds)

    x = np.asarray(config.x0, dtype=np.float64)
    window = TrajectoryWindow.constant(x, np.zeros(2), config.window)
    u_guess = np.zeros(2)
    warm: Optional[np.ndarray] = None
    logger.info(f"Closed loop '{label}': {config.steps} steps from x0={x.tolist()}")

    for k in range(config.steps):
        m = model.adapted_model(window) if adapting else fixed_model
        g_mean, g_std = mc_stats(m, x, u_guess, config.n_mc, seed=[config.seed, k], workers=config.workers)
        scenarios = generate(g_mean, g_std, config.multipliers, bounds)
        spec = OcpSpec(nominal=nominal, scenarios=scenarios.values, probs=scenarios.probs,
                       horizon=config.horizon, Q=Q, R=R, P=P,
                       penalty_weights=config.penalty_weights, max_iterations=config.max_iterations)
        try:
            solution: OcpSolution = solve(spec, x, warm_start=warm)
        except DivergenceError as e:
            logger.error(f"Controller diverged at step {k}: {e}")
            log.aborted_at = k
            break
        u = solution.u0
        try:
            x_next = dynamics.step(x, u, dt=config.dt, substeps=config.substeps)
        except DivergenceError as e:
            logger.error(f"Plant diverged at step {k}: {e}")
            log.aborted_at = k
            break
        g_real = x_next - nominal(x.reshape(1, 2), u.reshape(1, 2))[0]
        log.records.append(StepRecord(
            k=k, x=x, u=u, x_next=x_next, g_real=g_real, g_mean=g_mean, g_std=g_std,
            scenarios=scenarios, contained=scenarios.contains(g_real),
            cost_step=float(x @ Q @ x + u @ R @ u),
            viol_x=dynamics.STATE_BOX.violation(x), viol_u=dynamics.INPUT_BOX.violation(u),
            solver_iters=solution.iterations, solver_cost=solution.cost,
            fallback=solution.fallback, adapted=adapting,
        ))
        logger.debug(f"k={k} x={x.tolist()} u={u.tolist()} cost={solution.cost:.6g} "
                     f"iters={solution.iterations} time={solution.wall_time:.3f}s")

        window = window.push(x, u)
        u_guess = solution.next_input(scenarios.probs)
        warm = solution.shifted()
        x = x_next

    logger.info(f"Closed loop '{label}' finished after {len(log)} steps, final x={x.tolist()}")
    return log
