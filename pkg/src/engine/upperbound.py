"""Heuristic upper bounds from explicit purification-based extensions.

Any isometry V from the purifying reference into D ⊗ E gives a pure state
psi_ABDE and the value 1/2 (H(A|D) + H(A|E)) upper-bounds the squashed
entanglement; the optimiser searches over V.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.optimize import minimize

from src.engine.bound_result import NEAR_OPTIMAL, OPTIMAL, UPPER_HEURISTIC, BoundResult
from src.errors import ArgumentError
from src.quantum.fdiv import d_rm
from src.quantum.qstate import SUPPORT_CUTOFF, canonical_purification, spectral

logger = logging.getLogger(__name__)

DEFAULT_RESTARTS = 20
DEFAULT_MAX_ITERS = 500
GRADIENT_STEP = 1e-5
ENTROPY_FLOOR = 1e-12


def skew_hermitian(params, n):
    """i H with H Hermitian: n diagonal reals, then upper-triangle real and imaginary parts."""
    params = np.asarray(params, dtype=float)
    if params.size != n * n:
        raise ArgumentError(f"expected {n * n} isometry parameters, got {params.size}")
    iu = np.triu_indices(n, 1)
    off = iu[0].size
    h = np.diag(params[:n]).astype(complex)
    h[iu] = params[n:n + off] + 1j * params[n + off:]
    h[(iu[1], iu[0])] = np.conj(h[iu])
    return 1j * h


@dataclass
class ExtensionAnsatz:
    d_D: int
    d_E: int
    params: np.ndarray
    rng_seed: int = 0

    def __post_init__(self):
        if self.d_D < 1 or self.d_E < 1:
            raise ArgumentError(f"extension dimensions must be positive, got d_D={self.d_D}, d_E={self.d_E}")
        self.params = np.asarray(self.params, dtype=float)
        if self.params.size != self.num_params(self.d_D, self.d_E):
            raise ArgumentError(
                f"ansatz with d_D={self.d_D}, d_E={self.d_E} needs {self.num_params(self.d_D, self.d_E)} parameters"
            )

    @staticmethod
    def num_params(d_D, d_E):
        return (d_D * d_E) ** 2

    @classmethod
    def random(cls, d_D, d_E, seed=0, scale=1.0):
        rng = np.random.default_rng(seed)
        return cls(d_D, d_E, scale * rng.standard_normal(cls.num_params(d_D, d_E)), seed)

    def isometry(self, rank):
        n = self.d_D * self.d_E
        if rank > n:
            raise ArgumentError(f"d_D * d_E = {n} is smaller than the state rank {rank}")
        unitary = la.expm(skew_hermitian(self.params, n))
        return unitary[:, :rank]


def isometry_defect(v):
    return float(np.max(np.abs(v.conj().T @ v - np.eye(v.shape[1]))))


def _extension_tensor(rho_ab, ansatz, purification=None):
    """psi[a, b, d, e] of (I_AB ⊗ V)|canonical purification>."""
    if purification is None:
        purification = canonical_purification(rho_ab)
    d_a, d_b, rank = purification.dims
    v = ansatz.isometry(rank)
    psi = purification.vector.reshape(d_a * d_b, rank) @ v.T
    return psi.reshape(d_a, d_b, ansatz.d_D, ansatz.d_E)


def _entropy(matrix):
    evals = la.eigvalsh(0.5 * (matrix + matrix.conj().T))
    evals = evals[evals > ENTROPY_FLOOR]
    return float(-np.sum(evals * np.log2(evals)))


def _entropy_and_log(matrix):
    """H(matrix) in bits and log2(matrix) on the eigenvalues above the floor (zero elsewhere)."""
    evals, vecs = la.eigh(0.5 * (matrix + matrix.conj().T))
    keep = evals > ENTROPY_FLOOR
    logs = np.zeros_like(evals)
    logs[keep] = np.log2(evals[keep])
    return float(-np.sum(evals[keep] * logs[keep])), (vecs * logs) @ vecs.conj().T


def _marginals(psi):
    d_a, _, d_d, d_e = psi.shape
    rho_ad = np.einsum("abde,xbye->adxy", psi, psi.conj()).reshape(d_a * d_d, d_a * d_d)
    rho_ae = np.einsum("abde,xbdy->aexy", psi, psi.conj()).reshape(d_a * d_e, d_a * d_e)
    rho_d = np.einsum("abde,abye->dy", psi, psi.conj())
    rho_e = np.einsum("abde,abdy->ey", psi, psi.conj())
    return rho_ad, rho_d, rho_ae, rho_e


def objective(rho_ab, ansatz, purification=None):
    """1/2 (H(A|D) + H(A|E)) in bits on the extension built from ``ansatz``."""
    rho_ad, rho_d, rho_ae, rho_e = _marginals(_extension_tensor(rho_ab, ansatz, purification))
    return 0.5 * (_entropy(rho_ad) - _entropy(rho_d) + _entropy(rho_ae) - _entropy(rho_e))


def objective_and_gradient(rho_ab, ansatz, purification=None):
    """Entropic objective and its exact gradient in the ansatz parameters.

    With dS = -tr(drho log2 rho) for each marginal the derivative is
    -Re <W psi | dpsi>, W = log2 rho_AD - log2 rho_D + log2 rho_AE - log2 rho_E
    acting on psi_ABDE; it is pulled back through V = expm(K)[:, :rank] with the
    adjoint Frechet derivative of expm at K.
    """
    if purification is None:
        purification = canonical_purification(rho_ab)
    d_a, d_b, rank = purification.dims
    d_d, d_e = ansatz.d_D, ansatz.d_E
    n = d_d * d_e
    generator = skew_hermitian(ansatz.params, n)
    unitary = la.expm(generator)
    phi = purification.vector.reshape(d_a * d_b, rank)
    psi = (phi @ unitary[:, :rank].T).reshape(d_a, d_b, d_d, d_e)

    rho_ad, rho_d, rho_ae, rho_e = _marginals(psi)
    h_ad, log_ad = _entropy_and_log(rho_ad)
    h_d, log_d = _entropy_and_log(rho_d)
    h_ae, log_ae = _entropy_and_log(rho_ae)
    h_e, log_e = _entropy_and_log(rho_e)
    value = 0.5 * (h_ad - h_d + h_ae - h_e)

    w_psi = (
        np.einsum("xyad,abde->xbye", log_ad.reshape(d_a, d_d, d_a, d_d), psi)
        - np.einsum("yd,abde->abye", log_d, psi)
        + np.einsum("xyae,abde->xbdy", log_ae.reshape(d_a, d_e, d_a, d_e), psi)
        - np.einsum("ye,abde->abdy", log_e, psi)
    ).reshape(d_a * d_b, n)

    # df = -Re sum(conj(W psi) * phi dV^T) = -Re tr(gamma^H dU)
    gamma = np.zeros((n, n), dtype=complex)
    gamma[:, :rank] = w_psi.T @ phi.conj()
    xi = la.expm_frechet(-generator, gamma, compute_expm=False)

    iu = np.triu_indices(n, 1)
    grad = np.concatenate([
        -np.imag(np.diag(xi)),
        -np.imag(xi[iu] + xi.T[iu]),
        np.real(xi[iu] - xi.T[iu]),
    ])
    return value, grad


def sq_m_objective(rho_ab, ansatz, rule):
    """1/2 (-D_rm(rho_AD || I ⊗ rho_D) - D_rm(rho_AE || I ⊗ rho_E)); upper-bounds E_sq^(m)."""
    d_a = rho_ab.dims[0]
    rho_ad, rho_d, rho_ae, rho_e = _marginals(_extension_tensor(rho_ab, ansatz))
    first = d_rm(rule, rho_ad, np.kron(np.eye(d_a), rho_d))
    second = d_rm(rule, rho_ae, np.kron(np.eye(d_a), rho_e))
    return -0.5 * (first + second)


def central_gradient(func, x, step=GRADIENT_STEP):
    grad = np.empty_like(x)
    shifted = x.copy()
    for i in range(x.size):
        shifted[i] = x[i] + step
        up = func(shifted)
        shifted[i] = x[i] - step
        down = func(shifted)
        shifted[i] = x[i]
        grad[i] = (up - down) / (2.0 * step)
    return grad


@dataclass
class RestartResult:
    restart: int
    value: float
    params: np.ndarray
    iterations: int
    converged: bool
    message: str = ""


@dataclass
class UpperBoundSearch:
    rho_ab: object
    d_D: int
    d_E: int
    rule: object = None
    max_iters: int = DEFAULT_MAX_ITERS
    seed: int = 0
    results: list = field(default_factory=list)
    purification: object = field(init=False, repr=False)

    def __post_init__(self):
        self.purification = canonical_purification(self.rho_ab)

    def value(self, params):
        ansatz = ExtensionAnsatz(self.d_D, self.d_E, params, self.seed)
        if self.rule is None:
            return objective(self.rho_ab, ansatz, self.purification)
        return sq_m_objective(self.rho_ab, ansatz, self.rule)

    def value_and_gradient(self, params):
        if self.rule is None:
            ansatz = ExtensionAnsatz(self.d_D, self.d_E, params, self.seed)
            return objective_and_gradient(self.rho_ab, ansatz, self.purification)
        return self.value(params), central_gradient(self.value, np.asarray(params, dtype=float))

    def run_restart(self, restart):
        # Per-restart stream so serial and parallel runs agree.
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, restart]))
        x0 = rng.standard_normal(ExtensionAnsatz.num_params(self.d_D, self.d_E))
        result = minimize(
            self.value_and_gradient, x0, method="BFGS", jac=True,
            options={"maxiter": self.max_iters, "gtol": 1e-7},
        )
        value = float(result.fun)
        logger.debug("restart %d: value=%.6f after %d iterations (%s)", restart, value, result.nit, result.message)
        return RestartResult(restart, value, np.asarray(result.x), int(result.nit), bool(result.success), str(result.message))


def upper_bound(rho_ab, d_D, d_E, restarts=DEFAULT_RESTARTS, max_iters=DEFAULT_MAX_ITERS, seed=0,
                rule=None, workers=1):
    """Multi-start quasi-Newton search over isometries into D ⊗ E.

    With ``rule`` the E_sq^(m) objective is minimised instead of the entropic one.
    """
    if rho_ab.num_systems != 2:
        raise ArgumentError(f"upper_bound expects a bipartite state, got dims {rho_ab.dims}")
    if restarts < 1 or max_iters < 1:
        raise ArgumentError("restarts and max_iters must be positive")
    rank = spectral(rho_ab, SUPPORT_CUTOFF).rank
    if d_D * d_E < rank:
        raise ArgumentError(f"d_D * d_E = {d_D * d_E} is smaller than rank(rho_AB) = {rank}")

    start = time.perf_counter()
    search = UpperBoundSearch(rho_ab, d_D, d_E, rule, max_iters, seed)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(search.run_restart, range(restarts)))
    else:
        results = [search.run_restart(r) for r in range(restarts)]
    search.results = results

    history = []
    best = None
    for res in results:
        if best is None or res.value < best.value:
            best = res
        history.append(best.value)

    best_ansatz = ExtensionAnsatz(d_D, d_E, best.params, seed)
    defect = isometry_defect(best_ansatz.isometry(rank))
    status = OPTIMAL if best.converged else NEAR_OPTIMAL
    logger.info("upper bound d_D=%d d_E=%d: %.6f after %d restarts", d_D, d_E, best.value, restarts)
    return BoundResult(
        value=best.value,
        kind=UPPER_HEURISTIC,
        solver_status=status,
        m=rule.m if rule is not None else None,
        d_D=d_D,
        d_E=d_E,
        restarts=restarts,
        wall_time=time.perf_counter() - start,
        metadata={
            "seed": seed,
            "max_iters": max_iters,
            "best_restart": best.restart,
            "history": history,
            "restart_values": [r.value for r in results],
            "best_params": best.params.tolist(),
            "isometry_defect": defect,
            "objective": "sq_m" if rule is not None else "entropic",
        },
    )

