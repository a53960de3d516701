import unittest

import numpy as np

from src.config import Config
from src.engine.bound_result import UPPER_HEURISTIC
from src.engine.figure_reference import GRID, reference_value
from src.engine.quadrature import gauss_radau
from src.engine.upperbound import (
    ExtensionAnsatz, UpperBoundSearch, central_gradient, isometry_defect, objective, objective_and_gradient,
    skew_hermitian, sq_m_objective, upper_bound,
)
from src.errors import ArgumentError
from src.quantum.fdiv import LN2, pure_state_sq_m
from src.quantum.qstate import DensityMatrix, partial_trace, werner
from state_factory import maximally_entangled, random_density, random_pure


class TestAnsatz(unittest.TestCase):
    def test_skew_hermitian(self):
        rng = np.random.default_rng(4)
        k = skew_hermitian(rng.standard_normal(9), 3)
        np.testing.assert_allclose(k, -k.conj().T, atol=1e-14)
        with self.assertRaises(ArgumentError):
            skew_hermitian(np.zeros(5), 3)

    def test_isometry(self):
        ansatz = ExtensionAnsatz.random(2, 3, seed=9)
        v = ansatz.isometry(4)
        self.assertEqual(v.shape, (6, 4))
        self.assertLess(isometry_defect(v), 1e-10)
        with self.assertRaises(ArgumentError):
            ansatz.isometry(7)

    def test_parameter_count(self):
        self.assertEqual(ExtensionAnsatz.num_params(2, 2), 16)
        with self.assertRaises(ArgumentError):
            ExtensionAnsatz(2, 2, np.zeros(3))
        with self.assertRaises(ArgumentError):
            ExtensionAnsatz(0, 2, np.zeros(0))


class TestObjective(unittest.TestCase):
    def test_singlet_with_trivial_extension(self):
        ansatz = ExtensionAnsatz(1, 1, np.array([0.3]))
        self.assertAlmostEqual(objective(werner(2, 0.0), ansatz), 1.0, places=10)

    def test_product_state_is_zero(self):
        data = np.zeros((4, 4))
        data[0, 0] = 1.0
        ansatz = ExtensionAnsatz(1, 1, np.array([0.0]))
        self.assertAlmostEqual(objective(DensityMatrix((2, 2), data), ansatz), 0.0, places=10)

    def test_value_is_a_conditional_mutual_information(self):
        rng = np.random.default_rng(12)
        for _ in range(5):
            rho = random_density((2, 2), rng)
            ansatz = ExtensionAnsatz.random(2, 2, seed=int(rng.integers(1000)))
            value = objective(rho, ansatz)
            self.assertGreaterEqual(value, -1e-9)
            self.assertLessEqual(value, 1.0 + 1e-9)

    def test_sq_m_objective_on_pure_state(self):
        rule = gauss_radau(2)
        ansatz = ExtensionAnsatz(1, 1, np.array([0.0]))
        value = sq_m_objective(maximally_entangled(2), ansatz, rule)
        self.assertAlmostEqual(value, 11 / (16 * LN2), places=10)

        rho = random_pure((3, 2), np.random.default_rng(2))
        expected = pure_state_sq_m(rule, partial_trace(rho, (0,)))
        self.assertAlmostEqual(sq_m_objective(rho, ansatz, rule), expected, places=8)

    def test_central_gradient(self):
        x = np.array([1.0, -2.0, 0.5])
        grad = central_gradient(lambda v: float(np.sum(v ** 3)), x)
        np.testing.assert_allclose(grad, 3 * x ** 2, atol=1e-6)

    def test_exact_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(21)
        cases = [(random_density((2, 2), rng), 2, 2), (random_density((2, 3), rng, rank=3), 3, 2),
                 (werner(2, 0.3), 2, 3)]
        for rho, d_D, d_E in cases:
            ansatz = ExtensionAnsatz.random(d_D, d_E, seed=int(rng.integers(1000)), scale=0.7)
            value, grad = objective_and_gradient(rho, ansatz)
            self.assertAlmostEqual(value, objective(rho, ansatz), places=10)
            numeric = central_gradient(lambda p: objective(rho, ExtensionAnsatz(d_D, d_E, p)), ansatz.params)
            np.testing.assert_allclose(grad, numeric, atol=1e-5, err_msg=f"dims {rho.dims} d_D={d_D} d_E={d_E}")


class TestUpperBound(unittest.TestCase):
    def test_singlet(self):
        result = upper_bound(werner(2, 0.0), 1, 1, restarts=2, max_iters=5)
        self.assertEqual(result.kind, UPPER_HEURISTIC)
        self.assertAlmostEqual(result.value, 1.0, places=8)
        self.assertEqual((result.d_D, result.d_E, result.restarts), (1, 1, 2))
        self.assertEqual(result.metadata["objective"], "entropic")

    def test_history_is_non_increasing(self):
        result = upper_bound(werner(2, 0.3), 2, 2, restarts=4, max_iters=25, seed=3)
        history = result.metadata["history"]
        self.assertEqual(len(history), 4)
        self.assertTrue(all(b <= a for a, b in zip(history, history[1:])))
        self.assertEqual(result.value, history[-1])
        self.assertEqual(result.value, min(result.metadata["restart_values"]))
        self.assertLess(result.metadata["isometry_defect"], 1e-10)
        self.assertGreaterEqual(result.value, -1e-9)

    def test_seed_determinism(self):
        rho = werner(2, 0.2)
        first = upper_bound(rho, 2, 2, restarts=3, max_iters=15, seed=11)
        second = upper_bound(rho, 2, 2, restarts=3, max_iters=15, seed=11)
        self.assertEqual(first.value, second.value)
        threaded = upper_bound(rho, 2, 2, restarts=3, max_iters=15, seed=11, workers=3)
        self.assertAlmostEqual(first.value, threaded.value, places=10)

    def test_restart_from_search(self):
        search = UpperBoundSearch(werner(2, 0.2), 2, 2, max_iters=10, seed=5)
        result = search.run_restart(0)
        self.assertEqual(result.params.size, 16)
        self.assertAlmostEqual(search.value(result.params), result.value, places=12)

    def test_sq_m_variant(self):
        rule = gauss_radau(2)
        result = upper_bound(maximally_entangled(2), 1, 1, restarts=1, max_iters=3, rule=rule)
        self.assertEqual(result.m, 2)
        self.assertEqual(result.metadata["objective"], "sq_m")
        self.assertAlmostEqual(result.value, 11 / (16 * LN2), places=8)

    @unittest.skipUnless(Config.RUN_SLOW_TESTS, "set SQUASH_RUN_SLOW=true for figure reproduction")
    def test_werner_qubit_curve(self):
        for p in GRID:
            result = upper_bound(werner(2, p), 4, 4, seed=1)
            self.assertAlmostEqual(result.value, reference_value(2, "ub4", p), delta=0.02, msg=f"p={p}")
        self.assertLessEqual(upper_bound(werner(2, 0.5), 4, 4, seed=1).value, 0.005)

    @unittest.skipUnless(Config.RUN_SLOW_TESTS, "set SQUASH_RUN_SLOW=true for figure reproduction")
    def test_werner_qutrit_singlet_point(self):
        self.assertLessEqual(upper_bound(werner(3, 0.0), 4, 4, seed=1).value, 0.80)

    def test_rank_check(self):
        with self.assertRaises(ArgumentError):
            upper_bound(random_density((2, 2), np.random.default_rng(0)), 1, 2)
        with self.assertRaises(ArgumentError):
            upper_bound(werner(2, 0.0), 1, 1, restarts=0)
        with self.assertRaises(ArgumentError):
            upper_bound(random_density((2, 2, 2), np.random.default_rng(0)), 2, 2)


if __name__ == '__main__':
    unittest.main()
