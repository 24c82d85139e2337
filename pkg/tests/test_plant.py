#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Tests for the plant simulator, dataset collection and dataset CSV files
"""

import shutil
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np

# Add repository root to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.errors import ContractViolation, DivergenceError
from src.plant import (
    COLLECTION_BOX,
    DATASET_COLUMNS,
    INPUT_BOX,
    STATE_BOX,
    Box,
    ControlInput,
    PlantState,
    TransitionDataset,
    build_mismatch_dataset,
    collect_dataset,
    plant_derivative,
    read_dataset_csv,
    simulate,
    split_dataset,
    step,
    validate_dataset_csv,
    write_dataset_csv,
    write_split_json,
)


class TestPlantDerivative(unittest.TestCase):

    def test_known_values(self):
        cases = [
            ((0.0, 0.0), (0.0, 0.0), (0.0, 0.0)),
            ((-1.0, 5.0), (0.0, 0.0), (15.5, 10.1)),
            ((1.0, 1.0), (1.0, 1.0), (10.5, 1.1)),
        ]
        for x, u, expected in cases:
            with self.subTest(x=x, u=u):
                np.testing.assert_allclose(plant_derivative(x, u), expected, atol=1e-12)

    def test_accepts_domain_types(self):
        np.testing.assert_allclose(plant_derivative(PlantState(-1.0, 5.0), ControlInput(0.0, 0.0)), [15.5, 10.1])


class TestStep(unittest.TestCase):

    def test_origin_is_fixed_point(self):
        for dt in (0.01, 0.1, 1.0):
            with self.subTest(dt=dt):
                np.testing.assert_array_equal(step((0.0, 0.0), (0.0, 0.0), dt), [0.0, 0.0])

    def test_closed_loop_start_matches_fine_reference(self):
        coarse = step((-1.0, 5.0), (0.0, 0.0), 0.1)
        fine = step((-1.0, 5.0), (0.0, 0.0), 0.1, substeps=4000)
        np.testing.assert_allclose(coarse, fine, atol=1e-5)
        np.testing.assert_allclose(coarse, [-0.20119859, 4.94570557], atol=1e-5)

    def test_halving_substep_moves_result_by_truncation_error(self):
        x10 = step((-1.0, 5.0), (0.0, 0.0), 0.1, substeps=10)
        x20 = step((-1.0, 5.0), (0.0, 0.0), 0.1, substeps=20)
        gap = np.max(np.abs(x10 - x20))
        self.assertGreater(gap, 1e-7)
        self.assertLess(gap, 1e-5)

    def test_matches_fine_integration(self):
        coarse = step((0.5, 1.0), (0.2, -0.3), 0.1)
        fine = step((0.5, 1.0), (0.2, -0.3), 0.1, substeps=2000)
        np.testing.assert_allclose(coarse, fine, atol=1e-5)

    def test_fourth_order_convergence(self):
        x10 = step((0.5, 1.0), (0.2, -0.3), 0.1, substeps=10)
        x20 = step((0.5, 1.0), (0.2, -0.3), 0.1, substeps=20)
        x40 = step((0.5, 1.0), (0.2, -0.3), 0.1, substeps=40)
        ratio = np.linalg.norm(x10 - x20) / np.linalg.norm(x20 - x40)
        self.assertGreater(ratio, 8.0)
        self.assertLess(ratio, 32.0)

    def test_input_is_clamped(self):
        np.testing.assert_array_equal(step((0.5, 1.0), (5.0, -7.0)), step((0.5, 1.0), (1.0, -1.0)))

    def test_divergence_carries_last_state(self):
        with self.assertRaises(DivergenceError) as ctx:
            step((1e100, 1e100), (0.0, 0.0), 0.1)
        self.assertIsNotNone(ctx.exception.last_state)

    def test_invalid_dt(self):
        with self.assertRaises(ContractViolation):
            step((0.0, 0.0), (0.0, 0.0), 0.0)

    def test_simulate_chains_steps(self):
        inputs = np.array([[0.1, -0.2], [0.0, 0.3]])
        states = simulate((0.5, 1.0), inputs)
        np.testing.assert_array_equal(states[1], step((0.5, 1.0), inputs[0]))
        np.testing.assert_array_equal(states[2], step(states[1], inputs[1]))


class TestBox(unittest.TestCase):

    def test_violation_and_clamp(self):
        box = Box((-1.0, -1.0), (1.0, 1.0))
        self.assertEqual(box.violation((0.5, -0.5)), 0.0)
        self.assertAlmostEqual(box.violation((1.5, -3.0)), 2.0)
        np.testing.assert_array_equal(box.clamp((1.5, -3.0)), [1.0, -1.0])

    def test_default_boxes(self):
        self.assertTrue(STATE_BOX.contains((-1.0, 5.0)))
        self.assertFalse(STATE_BOX.contains((0.0, -0.1)))
        self.assertTrue(INPUT_BOX.contains((1.0, -1.0)))

    def test_inverted_bounds_rejected(self):
        with self.assertRaises(ContractViolation):
            Box((1.0,), (0.0,))


class TestCollectDataset(unittest.TestCase):

    def test_deterministic_per_seed(self):
        a = collect_dataset(200, seed=3)
        b = collect_dataset(200, seed=3)
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.u, b.u)
        np.testing.assert_array_equal(a.x_next, b.x_next)

    def test_records_are_plant_transitions(self):
        d = collect_dataset(100, seed=1)
        self.assertEqual(len(d), 100)
        for i in (0, 42, 99):
            np.testing.assert_array_equal(d.x_next[i], step(d.x[i], d.u[i]))
        self.assertTrue(np.all(np.abs(d.u) <= 0.5))

    def test_trajectory_stays_in_collection_box(self):
        d = collect_dataset(500, seed=2)
        self.assertTrue(all(COLLECTION_BOX.contains(x) for x in d.x))
        self.assertTrue(all(COLLECTION_BOX.contains(x) for x in d.x_next))

    def test_custom_collection_box_bounds_records(self):
        box = Box((-0.5, 0.0), (0.5, 5.0))
        d = collect_dataset(300, seed=4, collection_box=box)
        self.assertTrue(all(box.contains(x) for x in d.x_next))

    def test_restart_box_outside_state_box_rejected(self):
        with self.assertRaises(ContractViolation):
            collect_dataset(10, restart_box=Box((-6.0, 0.0), (3.0, 10.0)))

    def test_single_record_at_equilibrium(self):
        d = collect_dataset(1, input_low=0.0, input_high=0.0, x0=(0.0, 0.0))
        np.testing.assert_array_equal(d.x, [[0.0, 0.0]])
        np.testing.assert_array_equal(d.x_next, [[0.0, 0.0]])

    def test_restart_breaks_continuity(self):
        d = collect_dataset(1000, seed=0)
        flags = d.continues_previous()
        self.assertFalse(flags[0])
        continuing = np.flatnonzero(flags)
        np.testing.assert_array_equal(d.x[continuing], d.x_next[continuing - 1])

    def test_invalid_arguments(self):
        with self.assertRaises(ContractViolation):
            collect_dataset(0)
        with self.assertRaises(ContractViolation):
            collect_dataset(10, input_low=1.0, input_high=0.0)


class TestDatasetOperations(unittest.TestCase):

    def setUp(self):
        self.d = collect_dataset(1000, seed=0)

    def test_split_sizes_and_disjointness(self):
        split = split_dataset(self.d, 0.75, seed=0)
        self.assertEqual(len(split.train_idx), 750)
        self.assertEqual(len(split.test_idx), 250)
        self.assertEqual(len(set(split.train_idx) & set(split.test_idx)), 0)
        self.assertEqual(len(split.train()), 750)

    def test_mismatch_identity(self):
        f = lambda x, u: 0.9 * x + 0.1 * u  # noqa: E731
        d = build_mismatch_dataset(self.d, f)
        np.testing.assert_array_equal(d.x_next - f(d.x, d.u) - d.g, np.zeros_like(d.g))

    def test_zero_map_gives_next_state(self):
        d = build_mismatch_dataset(self.d, lambda x, u: np.zeros_like(x))
        np.testing.assert_array_equal(d.g, d.x_next)

    def test_exact_map_gives_zero_mismatch(self):
        exact = lambda x, u: np.array([step(xi, ui) for xi, ui in zip(x, u)])  # noqa: E731
        d = build_mismatch_dataset(self.d.subset(range(50)), exact)
        np.testing.assert_array_equal(d.g, np.zeros((50, 2)))

    def test_records_are_read_only(self):
        with self.assertRaises(ValueError):
            self.d.x[0, 0] = 1.0

    def test_contiguous_windows_stay_on_one_piece(self):
        anchors = self.d.contiguous_windows(5, 5)
        cont = self.d.continues_previous()
        for i in anchors[:50]:
            self.assertTrue(np.all(cont[i - 4:i + 5]))

    def test_bad_split_rejected(self):
        with self.assertRaises(ContractViolation):
            TransitionDataset(x=self.d.x[:3], u=self.d.u[:3], x_next=self.d.x_next[:3],
                              train_idx=[0, 1], test_idx=[1])


class TestDatasetCsv(unittest.TestCase):

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.temp_path = Path(self.temp_dir)
        self.d = split_dataset(collect_dataset(40, seed=5), 0.75, seed=1)

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_exact_round_trip_with_split(self):
        d = build_mismatch_dataset(self.d, lambda x, u: 0.5 * x)
        csv_path = write_dataset_csv(d, self.temp_path / "dataset.csv")
        split_path = write_split_json(d, self.temp_path / "split.json")
        back = read_dataset_csv(csv_path, split_path)
        np.testing.assert_array_equal(back.x, d.x)
        np.testing.assert_array_equal(back.x_next, d.x_next)
        np.testing.assert_array_equal(back.g, d.g)
        np.testing.assert_array_equal(back.test_idx, d.test_idx)

    def test_empty_targets_stay_empty(self):
        csv_path = write_dataset_csv(self.d, self.temp_path / "dataset.csv")
        lines = csv_path.read_text(encoding="utf-8").splitlines()
        self.assertEqual(lines[0], ",".join(DATASET_COLUMNS))
        self.assertTrue(lines[1].endswith(",,"))
        self.assertIsNone(read_dataset_csv(csv_path).g)

    def test_validation_messages(self):
        missing = self.temp_path / "missing.csv"
        is_valid, message = validate_dataset_csv(missing)
        self.assertFalse(is_valid)
        self.assertIn("does not exist", message)

        wrong = self.temp_path / "wrong.csv"
        wrong.write_text("a,b\n1,2\n", encoding="utf-8")
        is_valid, _ = validate_dataset_csv(wrong)
        self.assertFalse(is_valid)
        with self.assertRaises(ContractViolation):
            read_dataset_csv(wrong)


if __name__ == "__main__":
    unittest.main()
