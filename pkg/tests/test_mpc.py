#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Tests for the scenario-tree optimal control problem and its solver
"""

import sys
import unittest
from pathlib import Path

import numpy as np

# Add repository root to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from src import autodiff as ad
from src.errors import ContractViolation, DivergenceError
from src.mpc import OcpSpec, objective_and_gradient, rollout, solve, state_violation
from src.nominal import LpvModel
from src.plant import Box
from tests.gradcheck import gradient_mismatch, numeric_gradient

WIDE = Box((-1e3, -1e3), (1e3, 1e3))


class LinearModel:
    """x+ = A x + B u, batched over rows"""

    def __init__(self, A, B):
        self.A = np.asarray(A, dtype=np.float64)
        self.B = np.asarray(B, dtype=np.float64)

    def __call__(self, x, u):
        return np.asarray(x) @ self.A.T + np.asarray(u) @ self.B.T

    def forward_tensor(self, X, U):
        return ad.add(ad.matmul(X, self.A.T), ad.matmul(U, self.B.T))


def lqr_batch(A, B, Q, R, P, x0, N):
    """Finite-horizon LQR inputs from the stacked least-squares problem"""
    n, m = B.shape
    phi = np.vstack([np.linalg.matrix_power(A, i) for i in range(1, N + 1)])
    gamma = np.zeros((n * N, m * N))
    for i in range(N):
        for j in range(i + 1):
            gamma[n * i:n * (i + 1), m * j:m * (j + 1)] = np.linalg.matrix_power(A, i - j) @ B
    q_bar = np.kron(np.eye(N), Q)
    q_bar[-n:, -n:] = P
    r_bar = np.kron(np.eye(N), R)
    hessian = gamma.T @ q_bar @ gamma + r_bar
    return -np.linalg.solve(hessian, gamma.T @ q_bar @ phi @ x0).reshape(N, m)


def mild_lpv() -> LpvModel:
    A = np.zeros((3, 2, 2))
    A[0] = [[0.9, 0.1], [0.0, 0.85]]
    A[1] = [[0.05, 0.0], [0.0, -0.03]]
    A[2] = [[0.0, 0.02], [0.01, 0.0]]
    B = np.zeros((3, 2, 2))
    B[0] = [[0.3, 0.0], [0.1, 0.4]]
    B[1] = [[0.02, 0.0], [0.0, 0.01]]
    return LpvModel(A=A, B=B)


class TestRollout(unittest.TestCase):

    def test_zero_weights_cost_nothing(self):
        zero = np.zeros((2, 2))
        spec = OcpSpec(mild_lpv(), np.zeros((1, 2)), [1.0], horizon=3, Q=zero, R=zero, P=zero)
        _, cost = rollout(spec, (1.0, 2.0), np.full((1, 3, 2), 0.4))
        self.assertEqual(cost, 0.0)

    def test_hand_evaluated_cost(self):
        spec = OcpSpec(LinearModel(np.eye(2), np.zeros((2, 2))), np.zeros((1, 2)), [1.0], horizon=1)
        states, cost = rollout(spec, (1.0, 0.0), np.zeros((1, 1, 2)))
        self.assertEqual(cost, 2.0)
        np.testing.assert_array_equal(states[0, 1], [1.0, 0.0])

    def test_identical_scenarios_equal_single_scenario(self):
        g = np.array([0.01, -0.02])
        inputs = np.random.default_rng(0).uniform(-1, 1, size=(1, 4, 2))
        single = OcpSpec(mild_lpv(), g.reshape(1, 2), [1.0], horizon=4)
        triple = OcpSpec(mild_lpv(), np.repeat(g.reshape(1, 2), 3, axis=0), [8 / 9, 1 / 18, 1 / 18], horizon=4)
        _, c1 = rollout(single, (0.5, -0.2), inputs)
        _, c3 = rollout(triple, (0.5, -0.2), np.repeat(inputs, 3, axis=0))
        self.assertAlmostEqual(c1, c3, places=12)

    def test_scenario_offset_is_added_each_step(self):
        spec = OcpSpec(LinearModel(np.eye(2), np.zeros((2, 2))), [[0.1, 0.0], [0.0, -0.1], [0.0, 0.0]],
                       [0.25, 0.25, 0.5], horizon=3)
        states, _ = rollout(spec, (0.0, 0.0), np.zeros((3, 3, 2)))
        np.testing.assert_allclose(states[0, 3], [0.3, 0.0])
        np.testing.assert_allclose(states[1, 3], [0.0, -0.3])

    def test_first_inputs_must_agree(self):
        spec = OcpSpec(mild_lpv(), np.zeros((3, 2)), [1 / 3, 1 / 3, 1 / 3], horizon=2)
        inputs = np.zeros((3, 2, 2))
        inputs[1, 0] = [0.1, 0.0]
        with self.assertRaises(ContractViolation):
            rollout(spec, (0.0, 0.0), inputs)

    def test_divergence(self):
        spec = OcpSpec(LinearModel(1e300 * np.eye(2), np.zeros((2, 2))), np.zeros((1, 2)), [1.0], horizon=3)
        with self.assertRaises(DivergenceError):
            rollout(spec, (1e10, 1e10), np.zeros((1, 3, 2)))


class TestOcpSpec(unittest.TestCase):

    def test_weight_validation(self):
        with self.assertRaises(ContractViolation):
            OcpSpec(mild_lpv(), np.zeros((1, 2)), [1.0], Q=[[1.0, 0.0], [0.0, -1.0]])
        with self.assertRaises(ContractViolation):
            OcpSpec(mild_lpv(), np.zeros((1, 2)), [1.0], R=[[1.0, 0.5], [0.0, 1.0]])

    def test_probability_validation(self):
        with self.assertRaises(ContractViolation):
            OcpSpec(mild_lpv(), np.zeros((2, 2)), [0.6, 0.6])
        with self.assertRaises(ContractViolation):
            OcpSpec(mild_lpv(), np.zeros((1, 2)), [1.0], horizon=0)

    def test_decision_layout(self):
        spec = OcpSpec(mild_lpv(), np.zeros((3, 2)), [1 / 3, 1 / 3, 1 / 3], horizon=7)
        self.assertEqual(spec.n_decisions, 19)
        decisions = np.random.default_rng(1).uniform(-1, 1, size=(19, 2))
        inputs = spec.expand(decisions)
        self.assertEqual(inputs.shape, (3, 7, 2))
        np.testing.assert_array_equal(spec.compress(inputs), decisions)


class TestObjective(unittest.TestCase):

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        tight = Box((-0.3, -0.3), (0.3, 0.3))
        spec = OcpSpec(mild_lpv(), rng.normal(scale=0.05, size=(3, 2)), [0.5, 0.25, 0.25], horizon=4,
                       R=np.eye(2), state_box=tight)
        x0 = np.array([0.8, -0.6])
        decisions = rng.uniform(-1, 1, size=(spec.n_decisions, 2))
        _, analytic = objective_and_gradient(spec, x0, decisions, 10.0)
        numeric = numeric_gradient(lambda d: objective_and_gradient(spec, x0, d, 10.0)[0], decisions)
        self.assertLess(gradient_mismatch(analytic, numeric), 1e-4)

    def test_penalty_free_objective_is_expected_cost(self):
        spec = OcpSpec(mild_lpv(), np.zeros((3, 2)), [0.5, 0.25, 0.25], horizon=3, state_box=WIDE)
        decisions = np.random.default_rng(3).uniform(-1, 1, size=(spec.n_decisions, 2))
        value, _ = objective_and_gradient(spec, (0.2, 0.4), decisions, 1e6)
        _, cost = rollout(spec, (0.2, 0.4), spec.expand(decisions))
        self.assertAlmostEqual(value, cost, places=10)


class TestSolve(unittest.TestCase):

    def test_matches_finite_horizon_lqr(self):
        A = np.array([[1.0, 0.1], [0.0, 1.0]])
        B = np.array([[0.1, 0.0], [0.05, 0.1]])
        Q, R, P = np.eye(2), np.eye(2), np.eye(2)
        x0 = np.array([1.0, -0.5])
        spec = OcpSpec(LinearModel(A, B), np.zeros((1, 2)), [1.0], horizon=2, Q=Q, R=R, P=P,
                       state_box=WIDE, input_box=WIDE)
        solution = solve(spec, x0)
        np.testing.assert_allclose(solution.inputs[0], lqr_batch(A, B, Q, R, P, x0, 2), atol=1e-5)

    def test_beats_exhaustive_grid(self):
        nominal = mild_lpv()
        scenarios = np.array([[0.0, 0.0], [0.05, 0.1], [-0.05, -0.1]])
        probs = np.array([8 / 9, 1 / 18, 1 / 18])
        x0 = np.array([0.6, -0.4])
        spec = OcpSpec(nominal, scenarios, probs, horizon=2, R=np.eye(2), state_box=WIDE)
        solution = solve(spec, x0)

        axis = np.linspace(-1.0, 1.0, 21)
        grid = np.array(np.meshgrid(axis, axis, indexing="ij")).reshape(2, -1).T
        best = np.inf
        stage0 = x0 @ x0
        for u0 in grid:
            total = stage0 + u0 @ u0
            x1 = nominal(x0.reshape(1, 2), u0.reshape(1, 2))[0] + scenarios
            for j in range(3):
                x2 = nominal(np.repeat(x1[j:j + 1], len(grid), axis=0), grid) + scenarios[j]
                tail = x1[j] @ x1[j] + np.sum(grid ** 2, axis=1) + np.sum(x2 ** 2, axis=1)
                total += probs[j] * tail.min()
            best = min(best, total)
        self.assertLessEqual(solution.cost, best + 1e-3)

    def test_structure_and_feasibility(self):
        spec = OcpSpec(mild_lpv(), [[0.0, 0.0], [0.1, 0.2], [-0.1, -0.2]], [8 / 9, 1 / 18, 1 / 18])
        solution = solve(spec, (-1.0, 5.0))
        first = solution.inputs[:, 0]
        self.assertTrue(np.all(first == first[0]))
        np.testing.assert_array_equal(solution.u0, first[0])
        self.assertTrue(np.all(np.abs(solution.inputs) <= 1.0))
        states, cost = rollout(spec, (-1.0, 5.0), solution.inputs)
        self.assertAlmostEqual(solution.cost, cost, delta=1e-8)
        self.assertAlmostEqual(solution.max_state_violation, state_violation(spec, states))

    def test_no_worse_than_warm_start(self):
        spec = OcpSpec(mild_lpv(), [[0.0, 0.0], [0.02, 0.05], [-0.02, -0.05]], [8 / 9, 1 / 18, 1 / 18], horizon=4)
        warm = np.random.default_rng(4).uniform(-1, 1, size=(3, 4, 2))
        warm[:, 0] = warm[0, 0]
        solution = solve(spec, (0.5, 1.0), warm_start=warm)
        warm_value, _ = objective_and_gradient(spec, (0.5, 1.0), spec.compress(warm), spec.penalty_weights[-1])
        self.assertLessEqual(solution.penalized_cost, warm_value + 1e-10)
        self.assertFalse(solution.fallback)

    def test_deterministic(self):
        spec = OcpSpec(mild_lpv(), [[0.0, 0.0], [0.1, 0.2], [-0.1, -0.2]], [8 / 9, 1 / 18, 1 / 18])
        a = solve(spec, (0.4, 2.0))
        b = solve(spec, (0.4, 2.0))
        np.testing.assert_array_equal(a.inputs, b.inputs)

    def test_shift_and_next_input(self):
        spec = OcpSpec(mild_lpv(), [[0.0, 0.0], [0.1, 0.2], [-0.1, -0.2]], [0.5, 0.25, 0.25], horizon=3)
        solution = solve(spec, (0.4, 2.0))
        shifted = solution.shifted()
        self.assertEqual(shifted.shape, solution.inputs.shape)
        np.testing.assert_array_equal(shifted[:, :-1], solution.inputs[:, 1:])
        np.testing.assert_array_equal(shifted[:, -1], solution.inputs[:, -1])
        np.testing.assert_allclose(solution.next_input(spec.probs), spec.probs @ solution.inputs[:, 1])

    def test_non_finite_state_rejected(self):
        spec = OcpSpec(mild_lpv(), np.zeros((1, 2)), [1.0])
        with self.assertRaises(DivergenceError):
            solve(spec, (np.nan, 0.0))


if __name__ == "__main__":
    unittest.main()
