"""Standard f-divergences for f = -f_t and f = -r_m / ln 2.

Single-t divergences are rational in the eigenvalues and carry no logarithm;
the quadrature divergence includes the 1/ln 2 factor so it is in bits.
"""
import logging
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.engine.bound_result import PURE_CLOSED_FORM, BoundResult
from src.engine.quadrature import QuadratureRule, gauss_radau, r_m_eval
from src.errors import ArgumentError, ConditioningError
from src.quantum.qstate import SUPPORT_TOL, DensityMatrix, partial_trace, spectral

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
SINGLE_T = "single_t"
QUADRATURE = "quadrature"


@dataclass(frozen=True)
class DivergenceSpec:
    kind: str
    t: Optional[float] = None
    rule: Optional[QuadratureRule] = None

    def __post_init__(self):
        if self.kind == SINGLE_T:
            if self.t is None or not 0.0 <= self.t <= 1.0:
                raise ArgumentError(f"single_t divergence needs t in [0, 1], got {self.t}")
        elif self.kind == QUADRATURE:
            if self.rule is None:
                raise ArgumentError("quadrature divergence needs a rule")
        else:
            raise ArgumentError(f"unknown divergence kind {self.kind!r}")

    @classmethod
    def single(cls, t):
        return cls(SINGLE_T, t=t)

    @classmethod
    def quadrature(cls, rule):
        return cls(QUADRATURE, rule=rule)

    def __call__(self, rho, sigma):
        if self.kind == SINGLE_T:
            return d_minus_ft(self.t, rho, sigma)
        return d_rm(self.rule, rho, sigma)


def _pair(rho, sigma):
    r = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    s = sigma.data if isinstance(sigma, DensityMatrix) else np.asarray(sigma, dtype=complex)
    if r.shape != s.shape:
        raise ArgumentError(f"divergence dimension mismatch: {r.shape} vs {s.shape}")
    return r, s


def d_minus_ft(t, rho, sigma):
    """D_{-f_t}(rho||sigma) from the two spectral decompositions.

    Returns math.inf when t = 1 and rho leaks outside supp(sigma).
    """
    if not 0.0 <= t <= 1.0:
        raise ArgumentError(f"t must lie in [0, 1], got {t}")
    r, s = _pair(rho, sigma)
    rd, sd = spectral(r), spectral(s)
    lam = rd.eigenvalues[rd.support]
    p = rd.eigenvectors[:, rd.support]
    mu = sd.eigenvalues[sd.support]
    q = sd.eigenvectors[:, sd.support]

    overlaps = np.abs(p.conj().T @ q) ** 2
    x = mu[None, :] / lam[:, None]
    minus_ft = (1.0 - x) / (t * (x - 1.0) + 1.0)
    value = float(np.sum(lam[:, None] * minus_ft * overlaps))

    # tr(rho (I - sigma^0))
    leak = float(np.sum(lam) - np.sum(lam[:, None] * overlaps))
    if t == 1.0:
        if leak > SUPPORT_TOL:
            return math.inf
    else:
        value += max(leak, 0.0) / (1.0 - t)
    return value


def linear_divergence(t, rho, sigma):
    """D_{f_t} for the linear-fractional f_t itself (not its negative)."""
    value = d_minus_ft(t, rho, sigma)
    return -value


def d_rm(rule, rho, sigma):
    """D_{-r_m/ln2}(rho||sigma) in bits; propagates +inf."""
    total = 0.0
    for t, w in rule:
        term = d_minus_ft(t, rho, sigma)
        if math.isinf(term):
            return math.inf
        total += w * term
    return total / LN2


def sylvester_optimizer(t, rho, sigma):
    """Minimiser Z of the variational objective for D_{-f_t}.

    Solves (1 - t) Z rho + t sigma Z = -rho in the eigenbases of rho and sigma.
    """
    if not 0.0 < t <= 1.0:
        raise ArgumentError(f"variational form needs t in (0, 1], got {t}")
    r, s = _pair(rho, sigma)
    rd, sd = spectral(r), spectral(s)
    lam = np.where(rd.support, rd.eigenvalues, 0.0)
    mu = np.where(sd.support, sd.eigenvalues, 0.0)
    p, q = rd.eigenvectors, sd.eigenvectors

    rotated = q.conj().T @ p
    numer = -rotated * lam[None, :]
    denom = (1.0 - t) * lam[None, :] + t * mu[:, None]

    scale = max(float(np.max(lam)), float(np.max(mu)), 1e-300)
    singular = denom <= 1e-14 * scale
    if np.any(singular & (np.abs(numer) > SUPPORT_TOL * scale)):
        raise ConditioningError(
            f"Sylvester system is singular at t={t}: rho has weight outside supp(sigma)"
        )
    z_rot = np.where(singular, 0.0, numer / np.where(singular, 1.0, denom))
    return q @ z_rot @ p.conj().T


def variational_objective(t, rho, sigma, z):
    """-(1/t)[tr rho + tr rho(Z + Z*) + (1-t) tr rho Z*Z + t tr sigma Z Z*]."""
    r, s = _pair(rho, sigma)
    zz = z.conj().T
    inner = (
        np.trace(r)
        + np.trace(r @ (z + zz))
        + (1.0 - t) * np.trace(r @ zz @ z)
        + t * np.trace(s @ z @ zz)
    )
    return float(-np.real(inner) / t)


def variational_value(t, rho, sigma):
    z = sylvester_optimizer(t, rho, sigma)
    return variational_objective(t, rho, sigma, z)


def pure_state_sq_m(rule, rho_a):
    """(1/ln2) tr(rho_A r_m(rho_A^-1)): the exact E_sq^(m) of any purification of rho_A."""
    decomp = spectral(rho_a)
    lam = decomp.eigenvalues[decomp.support]
    return float(np.sum(lam * r_m_eval(rule, 1.0 / lam))) / LN2


def sq_m_error_bound(m, d_a):
    if m < 1 or d_a < 1:
        raise ArgumentError(f"sq_m_error_bound needs positive m and d_A, got m={m}, d_A={d_a}")
    return (2.0 * d_a - 2.0) / (m * m * LN2)


def pure_state_bounds(rho_ab, m):
    """Closed-form E_sq^(m) for a pure bipartite state, with the E_sq interval."""
    start = time.perf_counter()
    if rho_ab.num_systems != 2:
        raise ArgumentError(f"pure_state_bounds expects a bipartite state, got dims {rho_ab.dims}")
    if not rho_ab.is_pure():
        raise ArgumentError("closed form applies to pure states only")
    rule = gauss_radau(m)
    rho_a = partial_trace(rho_ab, (0,))
    value = pure_state_sq_m(rule, rho_a)
    gap = sq_m_error_bound(m, rho_ab.dims[0])
    logger.info("closed-form E_sq^(%d) = %.6f (E_sq <= %.6f)", m, value, value + gap)
    return BoundResult(
        value=value,
        kind=PURE_CLOSED_FORM,
        m=m,
        quadrature_gap=gap,
        upper_value=value + gap,
        wall_time=time.perf_counter() - start,
    )
