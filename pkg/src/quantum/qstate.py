"""Finite-dimensional quantum-state linear algebra.

Subsystems are positional: ``dims[i]`` is the dimension of subsystem ``i`` and
matrices are laid out row-major with subsystem 0 as the most significant index.
No operation ever reorders subsystems. All entropic quantities are in bits.
"""
import hashlib
import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as la

from src.errors import ArgumentError, ContractViolation

logger = logging.getLogger(__name__)

SUPPORT_CUTOFF = 1e-12
SUPPORT_TOL = 1e-9
WARN_TOL = 1e-9
HARD_TOL = 1e-6


def _hermiticity_defect(data):
    scale = 1.0 + float(np.max(np.abs(data))) if data.size else 1.0
    return float(np.max(np.abs(data - data.conj().T))) / scale if data.size else 0.0


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    dims: tuple
    data: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise ArgumentError(f"Subsystem dimensions must be positive integers, got {self.dims}")
        data = np.array(self.data, dtype=complex)
        side = math.prod(dims)
        if data.shape != (side, side):
            raise ArgumentError(f"Matrix of shape {data.shape} does not match dims {dims} (side {side})")
        data.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_matrix(cls, data, dims, context="state"):
        """Build a validated density matrix.

        Defects in (1e-9, 1e-6] are logged as warnings; larger defects raise
        ContractViolation.
        """
        rho = cls(dims, data)
        rho.validate(context)
        return rho

    @property
    def side(self):
        return self.data.shape[0]

    @property
    def num_systems(self):
        return len(self.dims)

    def trace(self):
        return float(np.real(np.trace(self.data)))

    def validate(self, context="state"):
        defects = {
            "Hermiticity": _hermiticity_defect(self.data),
            "trace": abs(np.trace(self.data) - 1.0),
            "positivity": max(0.0, -float(la.eigvalsh(_hermitian_part(self.data))[0])),
        }
        for name, defect in defects.items():
            if defect > HARD_TOL:
                raise ContractViolation(f"{context}: {name} defect {defect:.3e} exceeds {HARD_TOL:g}")
            if defect > WARN_TOL:
                logger.warning("%s: %s defect %.3e within tolerance band", context, name, defect)
        return True

    def is_pure(self, tol=1e-9):
        return abs(float(np.real(np.trace(self.data @ self.data))) - 1.0) <= tol


@dataclass(frozen=True, eq=False)
class SpectralDecomp:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    support_cutoff: float = SUPPORT_CUTOFF

    @cached_property
    def zero_class(self):
        lam_max = float(self.eigenvalues[-1]) if self.eigenvalues.size else 0.0
        if lam_max <= 0.0:
            return np.ones(self.eigenvalues.shape, dtype=bool)
        return self.eigenvalues < self.support_cutoff * lam_max

    @property
    def support(self):
        return ~self.zero_class

    @property
    def rank(self):
        return int(np.count_nonzero(self.support))

    def support_projector(self):
        vecs = self.eigenvectors[:, self.support]
        return vecs @ vecs.conj().T

    def apply(self, func):
        """Spectral calculus on the support; kernel eigenvalues map to 0."""
        values = np.zeros(self.eigenvalues.shape)
        lam = self.eigenvalues[self.support]
        values[self.support] = func(lam)
        return (self.eigenvectors * values) @ self.eigenvectors.conj().T

    def reconstruct(self):
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.conj().T


@dataclass(frozen=True)
class PureState:
    dims: tuple
    vector: np.ndarray

    def density(self):
        return DensityMatrix(self.dims, np.outer(self.vector, self.vector.conj()))


def _as_array(rho):
    return rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)


def _hermitian_part(data):
    return 0.5 * (data + data.conj().T)


def tensor(a, b):
    """Kronecker product; for DensityMatrix inputs the dims are concatenated."""
    if isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix):
        return DensityMatrix(a.dims + b.dims, np.kron(a.data, b.data))
    return np.kron(_as_array(a), _as_array(b))


def ptrace_array(data, dims, keep):
    dims = tuple(dims)
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ArgumentError("partial_trace needs at least one subsystem to keep")
    if keep[0] < 0 or keep[-1] >= len(dims):
        raise ArgumentError(f"Subsystem indices {keep} out of range for dims {dims}")
    n = len(dims)
    tensor_form = np.asarray(data).reshape(dims + dims)
    # Trace out from the highest index down so remaining axis numbers stay valid.
    for idx in reversed(range(n)):
        if idx in keep:
            continue
        current = tensor_form.ndim // 2
        tensor_form = np.trace(tensor_form, axis1=idx, axis2=idx + current)
    side = math.prod(dims[k] for k in keep)
    return tensor_form.reshape(side, side)


def partial_trace(rho, keep):
    data = ptrace_array(rho.data, rho.dims, keep)
    return DensityMatrix(tuple(rho.dims[k] for k in sorted(set(keep))), data)


def spectral(rho, cutoff=SUPPORT_CUTOFF):
    data = _as_array(rho)
    defect = _hermiticity_defect(data)
    if defect > HARD_TOL:
        raise ContractViolation(f"spectral decomposition of a non-Hermitian matrix (defect {defect:.3e})")
    evals, evecs = la.eigh(_hermitian_part(data))
    return SpectralDecomp(evals, evecs, cutoff)


def gen_inverse(rho, cutoff=SUPPORT_CUTOFF):
    return spectral(rho, cutoff).apply(lambda lam: 1.0 / lam)


def canonical_purification(rho):
    """Purification on system ⊗ reference with reference dimension rank(rho)."""
    decomp = spectral(rho)
    lam = np.clip(decomp.eigenvalues[decomp.support], 0.0, None)
    vecs = decomp.eigenvectors[:, decomp.support]
    rank = vecs.shape[1]
    # |psi> = sum_j sqrt(lam_j) |e_j> ⊗ |j>
    vector = (vecs * np.sqrt(lam)).reshape(-1)
    dims = rho.dims if isinstance(rho, DensityMatrix) else (decomp.eigenvalues.size,)
    return PureState(tuple(dims) + (rank,), vector)


def von_neumann_entropy(rho, floor=SUPPORT_CUTOFF):
    evals = la.eigvalsh(_hermitian_part(_as_array(rho)))
    evals = evals[evals > floor]
    return float(-np.sum(evals * np.log2(evals)))


def rel_entropy(rho, sigma):
    """D(rho||sigma) in bits; math.inf when supp(rho) is not inside supp(sigma)."""
    r, s = _as_array(rho), _as_array(sigma)
    if r.shape != s.shape:
        raise ArgumentError(f"rel_entropy dimension mismatch: {r.shape} vs {s.shape}")
    rd, sd = spectral(r), spectral(s)
    sigma_support = sd.support_projector()
    violation = float(np.real(np.trace(r @ (np.eye(r.shape[0]) - sigma_support))))
    if violation > SUPPORT_TOL:
        return math.inf
    lam = rd.eigenvalues[rd.support]
    p = rd.eigenvectors[:, rd.support]
    mu = sd.eigenvalues[sd.support]
    q = sd.eigenvectors[:, sd.support]
    overlaps = np.abs(p.conj().T @ q) ** 2
    first = float(np.sum(lam * np.log2(lam)))
    second = float(np.sum(lam[:, None] * overlaps * np.log2(mu)[None, :]))
    return first - second


def cond_entropy(rho, num_a=1):
    """H(A|E) = -D(rho_AE || I_A ⊗ rho_E) with A the first ``num_a`` subsystems."""
    if not 1 <= num_a < rho.num_systems:
        raise ArgumentError(f"cond_entropy needs a bipartition; got num_a={num_a} for dims {rho.dims}")
    d_a = math.prod(rho.dims[:num_a])
    rho_e = ptrace_array(rho.data, rho.dims, range(num_a, rho.num_systems))
    return -rel_entropy(rho.data, np.kron(np.eye(d_a), rho_e))


def cmi(rho):
    """I(A:B|E) = H(A|E) - H(A|BE) for a tripartite state on A ⊗ B ⊗ E."""
    if rho.num_systems != 3:
        raise ArgumentError(f"cmi expects a tripartite state, got dims {rho.dims}")
    rho_ae = partial_trace(rho, (0, 2))
    return cond_entropy(rho_ae, 1) - cond_entropy(rho, 1)


def swap_operator(d):
    swap = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            swap[i * d + j, j * d + i] = 1.0
    return swap


def werner(d, p):
    if int(d) != d or d < 2:
        raise ArgumentError(f"Werner states need d >= 2, got {d}")
    if not 0.0 <= p <= 1.0:
        raise ArgumentError(f"Werner parameter p must lie in [0, 1], got {p}")
    d = int(d)
    identity = np.eye(d * d)
    swap = swap_operator(d)
    sym = 0.5 * (identity + swap)
    asym = 0.5 * (identity - swap)
    data = p * sym / (d * (d + 1) / 2) + (1.0 - p) * asym / (d * (d - 1) / 2)
    return DensityMatrix((d, d), data)


def state_hash(rho):
    digest = hashlib.sha256()
    digest.update(repr(rho.dims).encode())
    digest.update(np.ascontiguousarray(rho.data).tobytes())
    return digest.hexdigest()[:16]
