import logging
import math
import os
import subprocess
import tempfile
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.config import Config
from src.engine.bound_result import INFEASIBLE, NEAR_OPTIMAL, NUMERICAL_TROUBLE, OPTIMAL, UNBOUNDED
from src.errors import ArgumentError, SolverEnvironmentError, SolverProtocolError
from src.utils.sdpa_format import SdpaResultParser, write_sdpa

logger = logging.getLogger(__name__)

EMBEDDED = "embedded"
EXTERNAL = "external"

# SDPA phase strings; "primal" is min c.x s.t. sum F_i x_i - F_0 >= 0.
SDPA_PHASES = {
    "pdOPT": OPTIMAL,
    "pdFEAS": NEAR_OPTIMAL,
    "pFEAS": NEAR_OPTIMAL,
    "dFEAS": NEAR_OPTIMAL,
    "pINF_dFEAS": INFEASIBLE,
    "pINF": INFEASIBLE,
    "dUNBD": INFEASIBLE,
    "pFEAS_dINF": UNBOUNDED,
    "dINF": UNBOUNDED,
    "pUNBD": UNBOUNDED,
    "pdINF": INFEASIBLE,
    "noINFO": NUMERICAL_TROUBLE,
}


@dataclass(frozen=True)
class SolverOptions:
    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    max_iters: int = 50000
    backend: str = EMBEDDED
    external_path: Optional[str] = None
    time_limit: Optional[float] = None
    cvxpy_solver: str = "CLARABEL"
    # Blocks wider than large_block_side go to large_block_solver; None keeps cvxpy_solver throughout.
    large_block_solver: Optional[str] = "SCS"
    large_block_side: int = 64
    first_order_tol: float = 1e-6
    verbose: bool = False

    def __post_init__(self):
        if self.backend not in (EMBEDDED, EXTERNAL):
            raise ArgumentError(f"unknown solver backend {self.backend!r}")
        if self.abs_tol <= 0 or self.rel_tol <= 0 or self.max_iters < 1:
            raise ArgumentError("solver tolerances and iteration limit must be positive")
        if self.first_order_tol <= 0 or self.large_block_side < 1:
            raise ArgumentError("first-order tolerance and large-block threshold must be positive")

    def solver_for(self, block_side):
        if self.large_block_solver and block_side > self.large_block_side:
            return self.large_block_solver.upper()
        return self.cvxpy_solver.upper()

    def cvxpy_kwargs(self, solver=None):
        """Translate the generic options into the chosen cvxpy solver's own names."""
        name = (solver or self.cvxpy_solver).upper()
        if name == "CLARABEL":
            kwargs = {"max_iter": self.max_iters, "tol_gap_abs": self.abs_tol, "tol_gap_rel": self.rel_tol}
            if self.time_limit:
                kwargs["time_limit"] = self.time_limit
        elif name == "SCS":
            tol = max(self.abs_tol, self.first_order_tol)
            kwargs = {"max_iters": self.max_iters, "eps_abs": tol, "eps_rel": tol}
            if self.time_limit:
                kwargs["time_limit_secs"] = self.time_limit
        elif name == "CVXOPT":
            kwargs = {"maxiters": self.max_iters, "abstol": self.abs_tol, "reltol": self.rel_tol}
        else:
            kwargs = {}
        return kwargs

    def tolerance_for(self, block_side):
        """Accuracy the chosen embedded solver is asked for at this block size."""
        if self.solver_for(block_side) == "SCS":
            return max(self.abs_tol, self.first_order_tol)
        return self.abs_tol


@dataclass
class SolveOutcome:
    primal: Optional[float]
    dual: Optional[float]
    status: str
    iterations: Optional[int] = None
    wall_time: float = 0.0
    x: Optional[np.ndarray] = None
    residual: Optional[float] = None
    solver: Optional[str] = None
    matrix: Optional[np.ndarray] = None

    @property
    def gap(self):
        if self.primal is None or self.dual is None:
            return math.nan
        if not (math.isfinite(self.primal) and math.isfinite(self.dual)):
            return math.nan
        return abs(self.primal - self.dual)


class SolverClient:
    """Runs an SDPInstance through cvxpy or an external SDPA-format binary."""

    def __init__(self, options=None):
        self.options = options or Config.get_solver_options()

    def solve(self, instance):
        start = time.perf_counter()
        if self.options.backend == EXTERNAL:
            outcome = self._solve_external(instance)
        else:
            outcome = self._solve_embedded(instance)
        outcome.wall_time = time.perf_counter() - start
        logger.info(
            "%s solve: status=%s primal=%s dual=%s in %.2fs",
            self.options.backend, outcome.status, outcome.primal, outcome.dual, outcome.wall_time,
        )
        return outcome

    def _solve_embedded(self, instance):
        import cvxpy as cp

        side = instance.block_side
        solver = self.options.solver_for(side)
        if solver != self.options.cvxpy_solver.upper():
            logger.info("block side %d above %d: solving with %s", side, self.options.large_block_side, solver)

        # F(x) is tied to a symmetric PSD matrix through its upper triangle.
        rows, cols = np.triu_indices(side)
        affine = instance.coeffs.tocsr()[rows * side + cols]
        offset = instance.const[rows * side + cols]
        x = cp.Variable(instance.num_vars)
        block = cp.Variable((side, side), symmetric=True)
        psd = block >> 0
        tie = block[rows, cols] == affine @ x - offset
        constraints = [psd, tie]
        equality = None
        if instance.num_constraints:
            equality = instance.eq_matrix @ x == instance.eq_rhs
            constraints.append(equality)
        problem = cp.Problem(cp.Minimize(instance.c @ x), constraints)

        try:
            problem.solve(solver=solver, verbose=self.options.verbose, **self.options.cvxpy_kwargs(solver))
        except cp.error.SolverError as e:
            logger.warning("cvxpy solver %s failed: %s", solver, e)
            return SolveOutcome(None, None, NUMERICAL_TROUBLE)

        status = self._map_cvxpy_status(problem.status)
        iterations = getattr(problem.solver_stats, "num_iters", None)
        if x.value is None:
            return SolveOutcome(None, None, status, iterations)

        xv = np.asarray(x.value, dtype=float)
        bv = np.asarray(block.value, dtype=float)
        tie_residual = bv[rows, cols] - (affine @ xv - offset)
        primal = float(instance.c @ xv)
        dual = None
        if psd.dual_value is not None:
            # Complementary slackness: primal - dual = <Y, X> plus the multiplier-weighted residuals.
            dual = primal - float(np.sum(np.asarray(psd.dual_value) * bv))
            if tie.dual_value is not None:
                dual -= float(np.asarray(tie.dual_value) @ tie_residual)
            if equality is not None and equality.dual_value is not None:
                dual -= float(np.asarray(equality.dual_value) @ (instance.eq_matrix @ xv - instance.eq_rhs))
        residual = float(np.max(np.abs(tie_residual))) if tie_residual.size else 0.0
        return SolveOutcome(primal, dual, status, iterations, x=xv, residual=residual, solver=solver, matrix=bv)

    @staticmethod
    def _map_cvxpy_status(status):
        import cvxpy as cp

        if status == cp.OPTIMAL:
            return OPTIMAL
        if status == cp.OPTIMAL_INACCURATE:
            return NEAR_OPTIMAL
        if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return INFEASIBLE
        if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
            return UNBOUNDED
        return NUMERICAL_TROUBLE

    def _solve_external(self, instance):
        path = self.options.external_path or Config.SDP_SOLVER_PATH
        if not path:
            raise SolverEnvironmentError("external backend selected but SQUASH_SDP_SOLVER is not set")

        with tempfile.TemporaryDirectory(prefix="squash-sdpa-") as workdir:
            problem_file = os.path.join(workdir, "problem.dat-s")
            result_file = os.path.join(workdir, "problem.out")
            write_sdpa(instance, problem_file)
            try:
                proc = subprocess.run(
                    [path, problem_file, result_file],
                    capture_output=True, text=True, timeout=self.options.time_limit,
                )
            except FileNotFoundError:
                raise SolverEnvironmentError(f"external SDP solver not found at {path}")
            except PermissionError:
                raise SolverEnvironmentError(f"external SDP solver at {path} is not executable")
            except subprocess.TimeoutExpired:
                logger.warning("external solver exceeded %ss", self.options.time_limit)
                return SolveOutcome(None, None, NUMERICAL_TROUBLE)

            text = ""
            if os.path.exists(result_file):
                with open(result_file, encoding="utf-8", errors="replace") as handle:
                    text = handle.read()
            if not text:
                text = proc.stdout
            try:
                parsed = SdpaResultParser().parse(text)
            except SolverProtocolError as e:
                e.output = (text or "") + (proc.stderr or "")
                raise

        status = SDPA_PHASES.get(parsed["phase"], NUMERICAL_TROUBLE)
        return SolveOutcome(parsed["primal"], parsed["dual"], status, parsed["iterations"], x=parsed["x"])
