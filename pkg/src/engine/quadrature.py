import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as la

from src.errors import ArgumentError
from src.quantum.qstate import spectral

logger = logging.getLogger(__name__)

MAX_NODES = 64


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Gauss-Radau rule on [0, 1] with the last node pinned at t = 1.

    r_m(x) = sum_i w_i f_{t_i}(x) under-approximates ln(x).
    """
    m: int
    nodes: np.ndarray
    weights: np.ndarray

    def __iter__(self):
        return iter(zip(self.nodes.tolist(), self.weights.tolist()))

    def csv_rows(self):
        return [f"{t:.17g},{w:.17g}" for t, w in self]


def _check_positive(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ArgumentError(f"argument must be positive, got min {x.min()}")
    return x


def f_t(t, x):
    """f_t(x) = (x - 1) / (t (x - 1) + 1); the denominator is positive for x > 0."""
    if not 0.0 <= t <= 1.0:
        raise ArgumentError(f"t must lie in [0, 1], got {t}")
    x = _check_positive(x)
    value = (x - 1.0) / (t * (x - 1.0) + 1.0)
    return value if value.ndim else float(value)


@lru_cache(maxsize=None)
def gauss_radau(m):
    """Build the m-node rule from the Jacobi matrix of the shifted Legendre recurrence.

    The last diagonal entry is modified so that 1 is an eigenvalue (Golub's
    end-point correction); nodes are the eigenvalues and weights the squared
    first eigenvector components.
    """
    if int(m) != m or m < 1:
        raise ArgumentError(f"number of quadrature nodes must be a positive integer, got {m}")
    m = int(m)
    if m > MAX_NODES:
        raise ArgumentError(f"m={m} is unsupported: nodes cluster beyond double precision past m={MAX_NODES}")
    if m == 1:
        return QuadratureRule(1, np.array([1.0]), np.array([1.0]))

    k = np.arange(1, m, dtype=float)
    # Off-diagonal of the monic shifted-Legendre Jacobi matrix on [0, 1].
    off = k / (2.0 * np.sqrt(4.0 * k * k - 1.0))
    diag = np.full(m, 0.5)

    inner = np.diag(diag[:-1] - 1.0) + np.diag(off[:-1], 1) + np.diag(off[:-1], -1)
    rhs = np.zeros(m - 1)
    rhs[-1] = off[-1] ** 2
    delta = la.solve(inner, rhs)
    diag[-1] = 1.0 + delta[-1]

    nodes, vectors = la.eigh_tridiagonal(diag, off)
    weights = vectors[0, :] ** 2

    if abs(nodes[-1] - 1.0) > 1e-10:
        raise ArgumentError(f"Radau end-point correction failed for m={m}: last node {nodes[-1]!r}")
    nodes[-1] = 1.0
    logger.debug("Gauss-Radau rule m=%d: nodes=%s weights=%s", m, nodes, weights)

    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(m, nodes, weights)


def r_m_eval(rule, x):
    x = _check_positive(x)
    total = np.zeros_like(x)
    for t, w in rule:
        total = total + w * (x - 1.0) / (t * (x - 1.0) + 1.0)
    return total if total.ndim else float(total)


def r_m_matrix(rule, matrix):
    """Apply r_m to the support eigenvalues of a PSD matrix; kernel maps to 0."""
    return spectral(matrix).apply(lambda lam: r_m_eval(rule, lam))
