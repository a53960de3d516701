import math
import os
import unittest
from unittest.mock import MagicMock, patch

import numpy as np

from src.clients.solver_client import EXTERNAL, SolveOutcome, SolverClient, SolverOptions
from src.config import Config
from src.engine.bound_result import INFEASIBLE, NEAR_OPTIMAL, NUMERICAL_TROUBLE, OPTIMAL, UNBOUNDED
from src.engine.moment import SDPInstance, lower_bound
from src.errors import ArgumentError, SolverEnvironmentError, SolverProtocolError
from src.quantum.qstate import werner
from src.utils.sdpa_format import SdpaResultParser, sdpa_text

SAMPLE_OUTPUT = """SDPA start at Sat Oct 17 10:00:00 2026
    mu      thetaP  thetaD  objP      objD      alphaP  alphaD  beta
Iteration = 12
phase.value  = pdOPT
   objValPrimal = +5.0000000000000000e+00
   objValDual   = +4.9999999990000000e+00
xVec =
{+5.000000000e+00}
"""


def trivial_instance():
    return SDPInstance.from_matrices([[[1.0]]], c=[1.0], eq_rows=[[1.0]], eq_rhs=[5.0])


def fake_run(output):
    def run(cmd, **kwargs):
        with open(cmd[2], "w", encoding="utf-8") as handle:
            handle.write(output)
        proc = MagicMock()
        proc.stdout, proc.stderr, proc.returncode = "", "", 0
        return proc
    return run


class TestSolverOptions(unittest.TestCase):
    def test_validation(self):
        with self.assertRaises(ArgumentError):
            SolverOptions(backend="magic")
        with self.assertRaises(ArgumentError):
            SolverOptions(abs_tol=0.0)

    def test_cvxpy_kwargs(self):
        kwargs = SolverOptions(max_iters=10, time_limit=5.0).cvxpy_kwargs()
        self.assertEqual(kwargs["max_iter"], 10)
        self.assertEqual(kwargs["time_limit"], 5.0)
        self.assertIn("eps_abs", SolverOptions(cvxpy_solver="SCS").cvxpy_kwargs())

    def test_large_block_routing(self):
        options = SolverOptions()
        self.assertEqual(options.solver_for(64), "CLARABEL")
        self.assertEqual(options.solver_for(65), "SCS")
        self.assertEqual(options.solver_for(136), "SCS")
        self.assertEqual(SolverOptions(large_block_solver=None).solver_for(1000), "CLARABEL")
        self.assertEqual(SolverOptions(large_block_side=200).solver_for(136), "CLARABEL")
        with self.assertRaises(ArgumentError):
            SolverOptions(large_block_side=0)

    def test_tolerance_follows_solver(self):
        options = SolverOptions(abs_tol=1e-8, first_order_tol=1e-6)
        self.assertEqual(options.tolerance_for(10), 1e-8)
        self.assertEqual(options.tolerance_for(136), 1e-6)
        self.assertEqual(SolverOptions(abs_tol=1e-5).tolerance_for(136), 1e-5)
        kwargs = options.cvxpy_kwargs(options.solver_for(136))
        self.assertEqual((kwargs["eps_abs"], kwargs["eps_rel"]), (1e-6, 1e-6))
        self.assertNotIn("eps_abs", options.cvxpy_kwargs(options.solver_for(10)))

    def test_config_large_block_options(self):
        with patch.object(Config, "LARGE_BLOCK_SOLVER", "CVXOPT"), patch.object(Config, "LARGE_BLOCK_SIDE", 100):
            options = Config.get_solver_options()
        self.assertEqual(options.solver_for(100), options.cvxpy_solver.upper())
        self.assertEqual(options.solver_for(101), "CVXOPT")
        with patch.object(Config, "LARGE_BLOCK_SOLVER", ""):
            self.assertIsNone(Config.get_solver_options().large_block_solver)

    def test_config_overrides(self):
        options = Config.get_solver_options(backend=EXTERNAL, external_path="/opt/sdpa", abs_tol=None)
        self.assertEqual(options.backend, EXTERNAL)
        self.assertEqual(options.external_path, "/opt/sdpa")
        self.assertEqual(options.abs_tol, 1e-8)


class TestSolveOutcome(unittest.TestCase):
    def test_gap(self):
        self.assertAlmostEqual(SolveOutcome(1.0, 0.75, OPTIMAL).gap, 0.25)
        self.assertTrue(math.isnan(SolveOutcome(None, 0.75, INFEASIBLE).gap))
        self.assertTrue(math.isnan(SolveOutcome(math.inf, 0.0, UNBOUNDED).gap))


class TestEmbeddedBackend(unittest.TestCase):
    def setUp(self):
        self.client = SolverClient(SolverOptions())

    def test_pinned_scalar(self):
        outcome = self.client.solve(trivial_instance())
        self.assertEqual(outcome.status, OPTIMAL)
        self.assertAlmostEqual(outcome.primal, 5.0, places=5)
        self.assertLess(outcome.gap, 1e-4)
        self.assertEqual(outcome.solver, "CLARABEL")
        self.assertLess(outcome.residual, 1e-6)

    def test_two_by_two_block(self):
        # min x1 + x2 subject to [[x1, 1], [1, x2]] >= 0: optimum 2 at x1 = x2 = 1.
        f1 = [[1.0, 0.0], [0.0, 0.0]]
        f2 = [[0.0, 0.0], [0.0, 1.0]]
        off = [[0.0, -1.0], [-1.0, 0.0]]
        instance = SDPInstance.from_matrices([f1, f2], c=[1.0, 1.0], const=off)
        outcome = self.client.solve(instance)
        self.assertEqual(outcome.status, OPTIMAL)
        self.assertAlmostEqual(outcome.primal, 2.0, places=5)
        np.testing.assert_allclose(outcome.x, [1.0, 1.0], atol=1e-4)

    def test_infeasible(self):
        instance = SDPInstance.from_matrices([[[1.0]]], c=[1.0], eq_rows=[[1.0]], eq_rhs=[-1.0])
        outcome = self.client.solve(instance)
        self.assertEqual(outcome.status, INFEASIBLE)
        self.assertIsNone(outcome.primal)

    def test_unbounded(self):
        instance = SDPInstance.from_matrices([[[1.0]]], c=[-1.0])
        self.assertEqual(self.client.solve(instance).status, UNBOUNDED)

    def test_solver_failure_is_numerical_trouble(self):
        import cvxpy as cp

        with patch.object(cp.Problem, "solve", side_effect=cp.error.SolverError("boom")):
            outcome = self.client.solve(trivial_instance())
        self.assertEqual(outcome.status, NUMERICAL_TROUBLE)
        self.assertIsNone(outcome.primal)


class TestExternalBackend(unittest.TestCase):
    def setUp(self):
        self.options = SolverOptions(backend=EXTERNAL, external_path="/opt/sdpa/bin/sdpa", time_limit=30.0)

    def test_result_file_is_parsed(self):
        with patch("src.clients.solver_client.subprocess.run", side_effect=fake_run(SAMPLE_OUTPUT)) as run:
            outcome = SolverClient(self.options).solve(trivial_instance())
        cmd = run.call_args.args[0]
        self.assertEqual(cmd[0], "/opt/sdpa/bin/sdpa")
        self.assertTrue(cmd[1].endswith(".dat-s"))
        self.assertEqual(run.call_args.kwargs["timeout"], 30.0)
        self.assertEqual(outcome.status, OPTIMAL)
        self.assertAlmostEqual(outcome.primal, 5.0)
        self.assertEqual(outcome.iterations, 12)
        np.testing.assert_allclose(outcome.x, [5.0])

    def test_phase_mapping(self):
        text = SAMPLE_OUTPUT.replace("pdOPT", "pFEAS")
        with patch("src.clients.solver_client.subprocess.run", side_effect=fake_run(text)):
            self.assertEqual(SolverClient(self.options).solve(trivial_instance()).status, NEAR_OPTIMAL)

    def test_missing_path(self):
        with patch.object(Config, "SDP_SOLVER_PATH", None):
            client = SolverClient(SolverOptions(backend=EXTERNAL))
            with self.assertRaises(SolverEnvironmentError):
                client.solve(trivial_instance())

    def test_missing_binary(self):
        with patch("src.clients.solver_client.subprocess.run", side_effect=FileNotFoundError()):
            with self.assertRaises(SolverEnvironmentError):
                SolverClient(self.options).solve(trivial_instance())

    def test_garbage_output_keeps_text(self):
        with patch("src.clients.solver_client.subprocess.run", side_effect=fake_run("segmentation fault\n")):
            with self.assertRaises(SolverProtocolError) as ctx:
                SolverClient(self.options).solve(trivial_instance())
        self.assertIn("segmentation fault", ctx.exception.output)

    @unittest.skipUnless(Config.SDP_SOLVER_PATH and os.path.exists(Config.SDP_SOLVER_PATH or ""),
                         "set SQUASH_SDP_SOLVER to an SDPA-compatible binary")
    def test_agrees_with_embedded_backend(self):
        external = SolverClient(SolverOptions(backend=EXTERNAL, external_path=Config.SDP_SOLVER_PATH))
        embedded = SolverClient(SolverOptions())
        self.assertAlmostEqual(external.solve(trivial_instance()).primal, 5.0, places=5)
        for p in np.linspace(0.0, 0.45, 10):
            rho = werner(2, float(p))
            ext = lower_bound(rho, 1, client=external).value
            emb = lower_bound(rho, 1, client=embedded).value
            self.assertAlmostEqual(ext, emb, delta=1e-4, msg=f"p={p}")


class TestSdpaResultParser(unittest.TestCase):
    def test_parse(self):
        parsed = SdpaResultParser().parse(SAMPLE_OUTPUT)
        self.assertEqual(parsed["phase"], "pdOPT")
        self.assertAlmostEqual(parsed["dual"], 4.999999999)
        self.assertEqual(parsed["iterations"], 12)

    def test_missing_fields(self):
        with self.assertRaises(SolverProtocolError):
            SdpaResultParser().parse("phase.value = pdOPT\n")

    def test_trivial_export(self):
        text = sdpa_text(trivial_instance())
        self.assertIn("1 = mDIM", text)
        self.assertIn("1 -2 = bLOCKsTRUCT", text)
        self.assertIn("0 2 1 1 5", text)
        self.assertIn("1 2 2 2 -1", text)


class TestLowerBoundWithClient(unittest.TestCase):
    def test_outcome_is_reported(self):
        client = MagicMock()
        client.solve.return_value = SolveOutcome(0.25, 0.2499, NEAR_OPTIMAL, 40, 1.5)
        result = lower_bound(werner(2, 0.2), 1, client=client)
        self.assertEqual(result.value, 0.25)
        self.assertEqual(result.solver_status, NEAR_OPTIMAL)
        self.assertAlmostEqual(result.primal_dual_gap, 1e-4)
        self.assertEqual(result.metadata["iterations"], 40)
        self.assertEqual(result.metadata["basis_size"], 17)
        self.assertEqual(result.metadata["num_equalities"], 16)
        instance = client.solve.call_args.args[0]
        self.assertEqual(instance.block_side, 2 * 68)

    def test_failed_solve_has_nan_value(self):
        client = MagicMock()
        client.solve.return_value = SolveOutcome(None, None, INFEASIBLE)
        result = lower_bound(werner(2, 0.2), 1, client=client)
        self.assertTrue(math.isnan(result.value))
        self.assertFalse(result.succeeded)


if __name__ == '__main__':
    unittest.main()
