# -*- coding: utf-8 -*-
"""
Nominal LPV model f(x, u) = A(rho) x + B(rho) u with scheduling rho = [x1; x1*x2]

A(rho) = A0 + rho1*A1 + rho2*A2 and B(rho) likewise; the coefficients are
identified by ridge-regularised least squares, which is the closed form of a
one-layer activation-free network mapping rho to the matrix entries.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import scipy.linalg

from .. import autodiff as ad
from ..errors import ContractViolation, SingularSystemError, UndefinedScoreError
from ..plant.dataset import TransitionDataset

logger = logging.getLogger(__name__)

N_COEFFS = 24
DEFAULT_RIDGE = 1e-8


def scheduling(x: np.ndarray) -> np.ndarray:
    """rho(x) = [x1, x1*x2] for a single state or a batch of states"""
    x = np.asarray(x, dtype=np.float64)
    return np.stack([x[..., 0], x[..., 0] * x[..., 1]], axis=-1)


def regressors(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Rows [x, rho1*x, rho2*x, u, rho1*u, rho2*u] (12 columns)"""
    x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
    u = np.asarray(u, dtype=np.float64).reshape(-1, 2)
    rho = scheduling(x)
    r1, r2 = rho[:, 0:1], rho[:, 1:2]
    return np.hstack([x, r1 * x, r2 * x, u, r1 * u, r2 * u])


@dataclass(frozen=True, eq=False)
class LpvModel:
    """Affine-in-rho coefficient stacks; A[k], B[k] are 2x2 for k = 0, 1, 2"""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        for name in ("A", "B"):
            value = np.array(getattr(self, name), dtype=np.float64)
            if value.shape != (3, 2, 2):
                raise ContractViolation(f"LPV coefficient '{name}' must have shape (3, 2, 2), got {value.shape}")
            value.flags.writeable = False
            object.__setattr__(self, name, value)

    @property
    def theta(self) -> np.ndarray:
        """Stacked (12 x 2) coefficient matrix so that x_next = regressors @ theta"""
        blocks = [self.A[k].T for k in range(3)] + [self.B[k].T for k in range(3)]
        return np.vstack(blocks)

    @classmethod
    def from_theta(cls, theta: np.ndarray) -> "LpvModel":
        theta = np.asarray(theta, dtype=np.float64).reshape(12, 2)
        A = np.stack([theta[2 * k:2 * k + 2].T for k in range(3)])
        B = np.stack([theta[6 + 2 * k:8 + 2 * k].T for k in range(3)])
        return cls(A=A, B=B)

    def matrices(self, x) -> Tuple[np.ndarray, np.ndarray]:
        """A(rho(x)), B(rho(x)) for one state"""
        r1, r2 = scheduling(np.asarray(x, dtype=np.float64).reshape(2))
        return self.A[0] + r1 * self.A[1] + r2 * self.A[2], self.B[0] + r1 * self.B[1] + r2 * self.B[2]

    def __call__(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Batched one-step prediction for (n, 2) states and inputs"""
        return regressors(x, u) @ self.theta

    def forward_tensor(self, X: ad.Tensor, U: ad.Tensor) -> ad.Tensor:
        """Differentiable batched prediction; X and U are (S, 2) tensors"""
        x1, x2 = ad.take(X, [0], axis=1), ad.take(X, [1], axis=1)
        u1, u2 = ad.take(U, [0], axis=1), ad.take(U, [1], axis=1)
        r2 = x1 * x2
        columns = [x1, x2, x1 * x1, x1 * x2, r2 * x1, r2 * x2,
                   u1, u2, x1 * u1, x1 * u2, r2 * u1, r2 * u2]
        return ad.matmul(ad.concat(columns, axis=1), ad.Tensor(self.theta))

    def to_dict(self) -> Dict[str, List]:
        return {"A": self.A.tolist(), "B": self.B.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, List]) -> "LpvModel":
        return cls(A=np.asarray(data["A"]), B=np.asarray(data["B"]))


def eval_nominal(m: LpvModel, x, u) -> np.ndarray:
    """f(x, u) = A(rho(x)) x + B(rho(x)) u for one state"""
    A, B = m.matrices(x)
    return A @ np.asarray(x, dtype=np.float64).reshape(2) + B @ np.asarray(u, dtype=np.float64).reshape(2)


def fit_lpv(train: TransitionDataset, ridge: float = DEFAULT_RIDGE) -> LpvModel:
    """
    Least-squares LPV identification

    Minimises sum ||x_next - A(rho)x - B(rho)u||^2 + ridge*||coeffs||^2 through
    the normal equations.

    Args:
        train: Transition records
        ridge: Tikhonov weight (>= 0)

    Returns:
        The unique minimiser as an LpvModel

    Raises:
        SingularSystemError: Normal matrix singular with ridge = 0
    """
    if len(train) < N_COEFFS:
        raise ContractViolation(f"LPV fit needs at least {N_COEFFS} records, got {len(train)}")
    if ridge < 0:
        raise ContractViolation(f"Ridge weight must be non-negative, got {ridge}")

    phi = regressors(train.x, train.u)
    normal = phi.T @ phi + ridge * np.eye(phi.shape[1])
    rhs = phi.T @ train.x_next
    if ridge == 0 and np.linalg.matrix_rank(normal) < normal.shape[0]:
        raise SingularSystemError("LPV normal matrix is singular; use a nonzero ridge weight")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            theta = scipy.linalg.solve(normal, rhs, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as e:
        raise SingularSystemError(f"LPV normal equations could not be solved ({e}); use a nonzero ridge weight") from e

    model = LpvModel.from_theta(theta)
    residual = np.abs(normal @ theta - rhs).max()
    logger.info(f"Fitted LPV model on {len(train)} records (ridge={ridge:g}, normal residual={residual:.2e})")
    return model


@dataclass(frozen=True)
class BfrScore:
    """Best-fit rate per state component, in percent"""

    values: Tuple[float, ...]

    def __post_init__(self):
        if any(not 0.0 <= v <= 100.0 for v in self.values):
            raise ContractViolation(f"BFR values must lie in [0, 100], got {self.values}")

    def __getitem__(self, index: int) -> float:
        return self.values[index]


def bfr(predicted: Sequence, actual: Sequence) -> BfrScore:
    """BFR_j = 100 * max(0, 1 - ||x_j - xhat_j|| / ||x_j - mean(x_j)||)"""
    predicted = np.asarray(predicted, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if predicted.shape != actual.shape:
        raise ContractViolation(f"BFR needs equal shapes, got {predicted.shape} and {actual.shape}")
    if predicted.ndim == 1:
        predicted, actual = predicted[:, None], actual[:, None]
    if len(actual) < 2:
        raise ContractViolation("BFR needs sequences of length >= 2")
    scores = []
    for j in range(actual.shape[1]):
        spread = np.linalg.norm(actual[:, j] - actual[:, j].mean())
        if spread == 0.0:
            raise UndefinedScoreError(f"BFR undefined for constant reference in component {j + 1}")
        error = np.linalg.norm(actual[:, j] - predicted[:, j])
        scores.append(100.0 * max(0.0, 1.0 - error / spread))
    return BfrScore(tuple(scores))


def one_step_bfr(m: LpvModel, d: TransitionDataset) -> BfrScore:
    return bfr(m(d.x, d.u), d.x_next)


def free_run(m: LpvModel, x0, inputs: np.ndarray) -> np.ndarray:
    """Simulate the nominal model alone from x0; row k+1 follows inputs[k]"""
    inputs = np.asarray(inputs, dtype=np.float64).reshape(-1, 2)
    states = np.empty((len(inputs) + 1, 2))
    states[0] = np.asarray(x0, dtype=np.float64).reshape(2)
    with np.errstate(over="ignore", invalid="ignore"):
        for k, u in enumerate(inputs):
            states[k + 1] = eval_nominal(m, states[k], u)
    return states
