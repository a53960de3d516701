"""Level-k moment relaxation for the f-squashed entanglement.

Conventions. The moment variable attached to block indices alpha, beta in
[d_A d_B] and a canonical word w is

    y(alpha, beta, w) = tr(sigma[alpha, beta] w),  sigma[alpha, beta] = (<alpha| ⊗ I) sigma_ABH (|beta> ⊗ I),

so conj(y(alpha, beta, w)) = y(beta, alpha, w*). The moment matrix is indexed
by (u, alpha) with u in the monomial basis and cell ((u, alpha), (v, beta))
holds y(alpha, beta, v u*), the complex conjugate of the Gram matrix of the
vectors u* s_alpha. Row index = u_index * d_A d_B + alpha, so the top-left
d_A d_B block is the state itself.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from itertools import product

import numpy as np
import scipy.sparse as sp

from src.config import Config
from src.engine.bound_result import LOWER_SDP, NUMERICAL_TROUBLE, BoundResult
from src.engine.ncpoly import (
    EMPTY, FAMILIES, Y, Z, Letter, Word, build_P_m, canonicalize, involution, word_mul, word_operator,
)
from src.engine.quadrature import gauss_radau
from src.errors import ArgumentError, ResourceCapError
from src.quantum.fdiv import sq_m_error_bound
from src.quantum.qstate import state_hash

logger = logging.getLogger(__name__)

MAX_LEVEL = 2


@dataclass
class MonomialBasis:
    k: int
    m: int
    d_a: int
    words: list
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {w: pos for pos, w in enumerate(self.words)}

    def __len__(self):
        return len(self.words)


def all_letters(m, d_a):
    return [
        Letter(family, i, a1, a2, starred)
        for family in FAMILIES
        for i in range(1, m + 1)
        for a1 in range(1, d_a + 1)
        for a2 in range(1, d_a + 1)
        for starred in (False, True)
    ]


def basis_size(k, m, d_a):
    """Number of canonical words of degree <= k: sum_j (j + 1) (2 m d_A^2)^j."""
    per_family = 2 * m * d_a * d_a
    return sum((j + 1) * per_family ** j for j in range(k + 1))


def enumerate_words(k, m, d_a, cap=None):
    if k < 0:
        raise ArgumentError(f"relaxation level must be non-negative, got {k}")
    cap = Config.MAX_BASIS_WORDS if cap is None else cap
    size = basis_size(k, m, d_a)
    if size > cap:
        raise ResourceCapError(f"monomial basis of level {k} has {size} words, above the cap of {cap}", size=size)

    letters = all_letters(m, d_a)
    y_letters = [l for l in letters if l.family == Y]
    z_letters = [l for l in letters if l.family == Z]
    words = []
    for degree in range(k + 1):
        for y_deg in range(degree + 1):
            for ys in product(y_letters, repeat=y_deg):
                for zs in product(z_letters, repeat=degree - y_deg):
                    words.append(Word(tuple(ys), tuple(zs)))
    words.sort(key=Word.sort_key)
    logger.debug("monomial basis k=%d m=%d d_A=%d: %d words", k, m, d_a, len(words))
    return MonomialBasis(k, m, d_a, words)


def split_word(word, k):
    """Factor a canonical word as u v* with u, v of degree <= k."""
    letters = word.letters
    cut = min(len(letters), k)
    u = canonicalize(letters[:cut])
    v = involution(canonicalize(letters[cut:]))
    return u, v


@dataclass
class MomentProblem:
    d_a: int
    d_b: int
    m: int
    k: int
    basis: MonomialBasis
    block_side: int
    words: list                # distinct product words, id -> Word (canonical order)
    cell_var: np.ndarray       # (block_side, block_side) variable id per cell
    cell_conj: np.ndarray      # True where the cell holds the conjugate of its variable
    var_keys: np.ndarray       # (n_vars, 3): alpha, beta, word id of each representative
    var_real: np.ndarray       # True for self-conjugate (real) variables
    equalities: list           # (var id, complex value)
    objective: sp.csr_matrix   # Hermitian C with objective = tr(C M)
    state_hash: str = ""

    @property
    def num_vars(self):
        return len(self.var_keys)

    def moment_matrix(self, y):
        values = np.asarray(y, dtype=complex)[self.cell_var]
        return np.where(self.cell_conj, values.conj(), values)

    def objective_value(self, y):
        moment = self.moment_matrix(y)
        return float(np.real(np.sum(self.objective.T.multiply(moment))))

    def equality_residual(self, y):
        return max((abs(y[vid] - value) for vid, value in self.equalities), default=0.0)


def _objective_terms(rule, d_a, d_b):
    """Yield (alpha, beta, word, coef) of 1/2 (P(Z) + P(Y)) ⊗ I_B."""
    for family in (Z, Y):
        poly = build_P_m(rule, d_a, family)
        for (r, c), entry in poly.entries.items():
            # tr(sigma (P ⊗ I_B)) = sum_b y((c, b), (r, b), P_rc)
            for b in range(d_b):
                alpha, beta = c * d_b + b, r * d_b + b
                for word, coef in entry.items():
                    yield alpha, beta, word, 0.5 * coef


def build_moment_problem(rho_ab, rule, k=1, cap=None):
    if rho_ab.num_systems != 2:
        raise ArgumentError(f"moment relaxation expects a bipartite state, got dims {rho_ab.dims}")
    if not 1 <= k <= MAX_LEVEL:
        raise ArgumentError(f"relaxation level must lie in [1, {MAX_LEVEL}], got {k}")
    start = time.perf_counter()
    d_a, d_b = rho_ab.dims
    dd = d_a * d_b
    basis = enumerate_words(k, rule.m, d_a, cap)
    nw = len(basis)
    side = dd * nw
    logger.info("moment problem: %d words, block side %d", nw, side)

    # Products u v* depend only on the word pair; number them in canonical order.
    # Row u, column v holds the word v u*.
    starred = [involution(u) for u in basis.words]
    product_words = [[word_mul(v, us) for v in basis.words] for us in starred]
    words = sorted({w for row in product_words for w in row} | {EMPTY}, key=Word.sort_key)
    word_id = {w: pos for pos, w in enumerate(words)}
    conj_id = np.array([word_id.get(involution(w), -1) for w in words])
    if np.any(conj_id < 0):
        raise ArgumentError("word set is not closed under the involution")
    nwords = len(words)
    pair_word = np.array([[word_id[w] for w in row] for row in product_words])

    # Cell (u, alpha), (v, beta) -> code of (alpha, beta, w) and of its conjugate key.
    u_idx, a_idx = np.divmod(np.arange(side), dd)
    wid = pair_word[u_idx[:, None], u_idx[None, :]]
    alpha = np.broadcast_to(a_idx[:, None], (side, side))
    beta = np.broadcast_to(a_idx[None, :], (side, side))
    code = (alpha * dd + beta) * nwords + wid
    conj_code = (beta * dd + alpha) * nwords + conj_id[wid]
    rep = np.minimum(code, conj_code)
    rep_codes, cell_var = np.unique(rep, return_inverse=True)
    cell_var = cell_var.reshape(side, side)
    cell_conj = code != rep

    var_pair, var_wid = np.divmod(rep_codes, nwords)
    var_alpha, var_beta = np.divmod(var_pair, dd)
    var_keys = np.stack([var_alpha, var_beta, var_wid], axis=1)
    var_real = rep_codes == ((var_beta * dd + var_alpha) * nwords + conj_id[var_wid])

    # State-matching equalities on the top-left block (u = v = empty word).
    empty_pos = basis.index[EMPTY]
    equalities = []
    seen = set()
    for a in range(dd):
        for b in range(dd):
            i, j = empty_pos * dd + a, empty_pos * dd + b
            vid = int(cell_var[i, j])
            if vid in seen:
                continue
            seen.add(vid)
            value = complex(rho_ab.data[a, b])
            equalities.append((vid, value.conjugate() if cell_conj[i, j] else value))

    # Objective: coefficient kappa on y(alpha, beta, u v*) sits at C[(u, beta), (v, alpha)].
    rows, cols, vals = [], [], []
    for a, b, word, coef in _objective_terms(rule, d_a, d_b):
        u, v = split_word(word, k)
        if u not in basis.index or v not in basis.index:
            raise ArgumentError(f"objective word {word} is not representable at level {k}")
        rows.append(basis.index[u] * dd + b)
        cols.append(basis.index[v] * dd + a)
        vals.append(coef)
    c_mat = sp.csr_matrix((vals, (rows, cols)), shape=(side, side), dtype=complex)
    c_mat = ((c_mat + c_mat.conj().T) * 0.5).tocsr()
    c_mat.sum_duplicates()

    problem = MomentProblem(
        d_a=d_a, d_b=d_b, m=rule.m, k=k, basis=basis, block_side=side, words=words,
        cell_var=cell_var, cell_conj=cell_conj, var_keys=var_keys, var_real=var_real,
        equalities=equalities, objective=c_mat, state_hash=state_hash(rho_ab),
    )
    logger.info(
        "moment problem assembled: %d complex variables, %d equalities in %.2fs",
        problem.num_vars, len(equalities), time.perf_counter() - start,
    )
    return problem


def realify_hermitian(h):
    """[[Re H, -Im H], [Im H, Re H]] for dense or sparse H."""
    if sp.issparse(h):
        re, im = h.real, h.imag
        return sp.bmat([[re, -im], [im, re]]).tocsr()
    re, im = np.real(h), np.imag(h)
    return np.block([[re, -im], [im, re]])


@dataclass
class SDPInstance:
    """Real SDP in SDPA primal form.

    minimise c.x subject to  sum_p x_p F_p - F_0 >= 0  (one PSD block of side
    ``block_side``) and  eq_matrix x = eq_rhs.  ``coeffs`` column p is the
    row-major vectorisation of F_p; ``const`` is that of F_0.
    """
    block_side: int
    coeffs: sp.csc_matrix
    const: np.ndarray
    c: np.ndarray
    eq_matrix: sp.csr_matrix
    eq_rhs: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def num_vars(self):
        return self.coeffs.shape[1]

    @property
    def num_constraints(self):
        return self.eq_matrix.shape[0]

    @classmethod
    def from_matrices(cls, matrices, c, eq_rows=(), eq_rhs=(), const=None, metadata=None):
        """Small dense constructor: ``matrices`` are the symmetric F_1..F_n."""
        side = np.asarray(matrices[0]).shape[0]
        coeffs = sp.csc_matrix(np.column_stack([np.asarray(f, dtype=float).reshape(-1) for f in matrices]))
        const = np.zeros(side * side) if const is None else np.asarray(const, dtype=float).reshape(-1)
        eq = sp.csr_matrix(np.asarray(eq_rows, dtype=float).reshape(-1, len(matrices)))
        return cls(side, coeffs, const, np.asarray(c, dtype=float), eq,
                   np.asarray(eq_rhs, dtype=float), dict(metadata or {}))

    def matrix(self, x):
        vec = self.coeffs @ np.asarray(x, dtype=float) - self.const
        return vec.reshape(self.block_side, self.block_side)

    def objective(self, x):
        return float(self.c @ np.asarray(x, dtype=float))

    def is_symmetric(self, tol=0.0):
        side = self.block_side
        perm = (np.arange(side * side).reshape(side, side).T).reshape(-1)
        diff = self.coeffs - self.coeffs[perm, :]
        return (abs(diff).max() if diff.nnz else 0.0) <= tol


def real_index(mp):
    """Real unknowns: Re y_v at position v, Im y_v (complex variables only) after them."""
    n = mp.num_vars
    im_index = np.full(n, -1)
    complex_vars = np.flatnonzero(~mp.var_real)
    im_index[complex_vars] = n + np.arange(complex_vars.size)
    return im_index, n + complex_vars.size


def realify(mp):
    side = mp.block_side
    big = 2 * side
    im_index, n_real = real_index(mp)

    rows_i, cols_j = np.nonzero(np.ones((side, side), dtype=bool))
    var = mp.cell_var.reshape(-1)
    sign = np.where(mp.cell_conj.reshape(-1), -1.0, 1.0)

    # Re M[i, j] = a_v in both diagonal blocks.
    entries_r = [rows_i * big + cols_j, (rows_i + side) * big + (cols_j + side)]
    entries_c = [var, var]
    entries_v = [np.ones(var.size), np.ones(var.size)]
    # Im M[i, j] = sign * b_v: lower-left +Im, upper-right -Im.
    has_im = im_index[var] >= 0
    im_cols = im_index[var][has_im]
    im_sign = sign[has_im]
    ri, cj = rows_i[has_im], cols_j[has_im]
    entries_r += [(ri + side) * big + cj, ri * big + (cj + side)]
    entries_c += [im_cols, im_cols]
    entries_v += [im_sign, -im_sign]

    coeffs = sp.csc_matrix(
        (np.concatenate(entries_v), (np.concatenate(entries_r), np.concatenate(entries_c))),
        shape=(big * big, n_real),
    )
    coeffs.sort_indices()

    # tr(R(C) R(M)) = 2 tr(C M).
    rc = realify_hermitian(mp.objective).tocsr()
    c = 0.5 * (coeffs.T @ np.asarray(rc.reshape((1, big * big)).todense()).reshape(-1))

    eq_rows, eq_cols, eq_vals, rhs = [], [], [], []
    for vid, value in mp.equalities:
        eq_rows.append(len(rhs)); eq_cols.append(vid); eq_vals.append(1.0); rhs.append(value.real)
        if im_index[vid] >= 0:
            eq_rows.append(len(rhs)); eq_cols.append(im_index[vid]); eq_vals.append(1.0); rhs.append(value.imag)
    eq_matrix = sp.csr_matrix((eq_vals, (eq_rows, eq_cols)), shape=(len(rhs), n_real))

    metadata = {
        "m": mp.m, "k": mp.k, "d_A": mp.d_a, "d_B": mp.d_b, "state_hash": mp.state_hash,
        "basis_size": len(mp.basis), "block_side": side,
    }
    return SDPInstance(big, coeffs, np.zeros(big * big), np.asarray(c).reshape(-1), eq_matrix,
                       np.asarray(rhs), metadata)


def real_vector(mp, y):
    """Pack complex moments into the realified unknown vector."""
    im_index, n_real = real_index(mp)
    y = np.asarray(y, dtype=complex)
    x = np.zeros(n_real)
    x[:mp.num_vars] = y.real
    has_im = im_index >= 0
    x[im_index[has_im]] = y.imag[has_im]
    return x


def complex_vector(mp, x):
    """Inverse of real_vector: complex moments from a realified solution."""
    im_index, _ = real_index(mp)
    x = np.asarray(x, dtype=float)
    y = x[:mp.num_vars].astype(complex)
    has_im = im_index >= 0
    y[has_im] += 1j * x[im_index[has_im]]
    return y


def witness_moments(mp, sigma_abh, assignment):
    """Moments y(alpha, beta, w) = tr(sigma[alpha, beta] w) of an explicit extension."""
    dd = mp.d_a * mp.d_b
    data = sigma_abh.data if hasattr(sigma_abh, "data") else np.asarray(sigma_abh)
    h = data.shape[0] // dd
    blocks = data.reshape(dd, h, dd, h)
    word_ops = {}
    y = np.zeros(mp.num_vars, dtype=complex)
    for vid, (a, b, wid) in enumerate(mp.var_keys.tolist()):
        if wid not in word_ops:
            word_ops[wid] = word_operator(mp.words[wid], assignment, h)
        y[vid] = np.trace(blocks[a, :, b, :] @ word_ops[wid])
    return y


def lower_bound(rho_ab, m, k=1, opts=None, cap=None, client=None):
    """SDP lower bound on E_sq^(m) (hence on E_sq) from the level-k relaxation."""
    from src.clients.solver_client import SolverClient

    start = time.perf_counter()
    rule = gauss_radau(m)
    mp = build_moment_problem(rho_ab, rule, k, cap)
    instance = realify(mp)
    client = client or SolverClient(opts or Config.get_solver_options())
    outcome = client.solve(instance)
    value = outcome.primal if outcome.primal is not None else math.nan
    status = outcome.status if math.isfinite(value) or outcome.status not in ("optimal", "near_optimal") else NUMERICAL_TROUBLE
    logger.info("lower bound m=%d k=%d: %.6f (%s)", m, k, value, status)
    return BoundResult(
        value=value,
        kind=LOWER_SDP,
        solver_status=status,
        m=m,
        k=k,
        primal_dual_gap=outcome.gap,
        wall_time=time.perf_counter() - start,
        quadrature_gap=sq_m_error_bound(m, rho_ab.dims[0]),
        metadata={
            "d_A": mp.d_a,
            "d_B": mp.d_b,
            "basis_size": len(mp.basis),
            "block_side": mp.block_side,
            "num_real_vars": instance.num_vars,
            "num_equalities": instance.num_constraints,
            "state_hash": mp.state_hash,
            "dual_value": outcome.dual,
            "iterations": outcome.iterations,
            "solve_seconds": outcome.wall_time,
            "solver": outcome.solver,
            "tie_residual": outcome.residual,
            "certified": False,
            "limitation": "value is the solver primal objective without rigorous post-solve certification",
        },
    )
