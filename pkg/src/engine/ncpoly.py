"""Noncommutative polynomials over the Y/Z letter families.

Letters carry 1-based quadrature and matrix indices (``Z_i[a1, a2]``); matrix
positions inside a MatPoly are 0-based. Y-letters commute with Z-letters and
nothing else commutes, so a canonical word is its Y-letters followed by its
Z-letters, each in input order.
"""
import logging
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from src.errors import ArgumentError
from src.quantum.fdiv import sylvester_optimizer
from src.quantum.qstate import DensityMatrix, ptrace_array

logger = logging.getLogger(__name__)

Y = "Y"
Z = "Z"
FAMILIES = (Y, Z)
PRUNE_TOL = 1e-15
LN2 = math.log(2.0)


@dataclass(frozen=True, order=True)
class Letter:
    # Field order is the total order: family, i, a1, a2, starred.
    family: str
    i: int
    a1: int
    a2: int
    starred: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ArgumentError(f"unknown letter family {self.family!r}")
        if self.i < 1 or self.a1 < 1 or self.a2 < 1:
            raise ArgumentError(f"letter indices are 1-based, got {self}")

    def star(self):
        return Letter(self.family, self.i, self.a1, self.a2, not self.starred)

    def unstarred(self):
        return Letter(self.family, self.i, self.a1, self.a2, False)

    def __str__(self):
        return f"{self.family}{self.i}[{self.a1},{self.a2}]{'*' if self.starred else ''}"


@dataclass(frozen=True)
class Word:
    y_part: tuple = ()
    z_part: tuple = ()

    @property
    def letters(self):
        return self.y_part + self.z_part

    @property
    def degree(self):
        return len(self.y_part) + len(self.z_part)

    def sort_key(self):
        return (self.degree, self.letters)

    def __str__(self):
        return " ".join(str(letter) for letter in self.letters) or "1"


EMPTY = Word()


def canonicalize(letters):
    letters = tuple(letters)
    return Word(
        tuple(l for l in letters if l.family == Y),
        tuple(l for l in letters if l.family == Z),
    )


def involution(word):
    return Word(
        tuple(l.star() for l in reversed(word.y_part)),
        tuple(l.star() for l in reversed(word.z_part)),
    )


def word_mul(u, v):
    return canonicalize(u.letters + v.letters)


class MatPoly:
    """Square matrix whose entries are polynomials {Word: complex}."""

    def __init__(self, side, hermitian=False):
        if side < 1:
            raise ArgumentError(f"MatPoly side must be positive, got {side}")
        self.side = side
        self.hermitian = hermitian
        self.entries = defaultdict(dict)

    def add_term(self, row, col, word, coef):
        entry = self.entries[(row, col)]
        entry[word] = entry.get(word, 0.0) + complex(coef)

    def prune(self, tol=PRUNE_TOL):
        for key in list(self.entries):
            entry = {w: c for w, c in self.entries[key].items() if abs(c) > tol}
            if entry:
                self.entries[key] = entry
            else:
                del self.entries[key]
        return self

    def entry(self, row, col):
        return self.entries.get((row, col), {})

    def terms(self, row, col):
        """Terms of one entry in canonical word order."""
        return sorted(self.entry(row, col).items(), key=lambda item: item[0].sort_key())

    def words(self):
        found = set()
        for entry in self.entries.values():
            found.update(entry)
        return sorted(found, key=Word.sort_key)

    def max_degree(self):
        return max((w.degree for w in self.words()), default=0)

    def is_hermitian_symmetric(self, tol=1e-12):
        for (row, col), entry in self.entries.items():
            mirror = self.entry(col, row)
            for word, coef in entry.items():
                if abs(coef - np.conj(mirror.get(involution(word), 0.0))) > tol:
                    return False
        return True

    def __add__(self, other):
        if self.side != other.side:
            raise ArgumentError(f"cannot add MatPoly of sides {self.side} and {other.side}")
        out = MatPoly(self.side, self.hermitian and other.hermitian)
        for source in (self, other):
            for (row, col), entry in source.entries.items():
                for word, coef in entry.items():
                    out.add_term(row, col, word, coef)
        return out.prune()

    def scaled(self, factor):
        out = MatPoly(self.side, self.hermitian and np.isreal(factor))
        for (row, col), entry in self.entries.items():
            for word, coef in entry.items():
                out.add_term(row, col, word, factor * coef)
        return out.prune()

    def dump(self):
        """Entry-by-entry text listing with terms in canonical order."""
        lines = [f"MatPoly side={self.side} hermitian={self.hermitian}"]
        for row in range(self.side):
            for col in range(self.side):
                for word, coef in self.terms(row, col):
                    lines.append(f"[{row + 1},{col + 1}] {coef.real:+.17g}{coef.imag:+.17g}j {word}")
        return "\n".join(lines) + "\n"


def build_P_m(rule, d_a, family=Z):
    """The d_A x d_A polynomial P^(m) with the 1/ln2 factor folded into its coefficients."""
    if family not in FAMILIES:
        raise ArgumentError(f"unknown letter family {family!r}")
    poly = MatPoly(d_a, hermitian=True)
    idx = range(1, d_a + 1)
    for i, (t, w) in enumerate(rule, start=1):
        c = w / (t * LN2)

        def letter(a1, a2, starred=False):
            return Letter(family, i, a1, a2, starred)

        for a1 in idx:
            for a2 in idx:
                row, col = a1 - 1, a2 - 1
                poly.add_term(row, col, canonicalize([letter(a1, a2)]), c)
                poly.add_term(row, col, canonicalize([letter(a2, a1, True)]), c)
                for a3 in idx:
                    poly.add_term(row, col, canonicalize([letter(a3, a1, True), letter(a3, a2)]), c * (1.0 - t))
                if a1 == a2:
                    poly.add_term(row, col, EMPTY, c)
                    for a3 in idx:
                        for a4 in idx:
                            poly.add_term(row, col, canonicalize([letter(a3, a4), letter(a3, a4, True)]), c * t)
    return poly.prune()


def _letter_operator(letter, assignment):
    if letter in assignment:
        return assignment[letter]
    base = assignment.get(letter.unstarred())
    if base is None:
        raise ArgumentError(f"no operator assigned to {letter}")
    return base.conj().T if letter.starred else base


def word_operator(word, assignment, dim):
    op = np.eye(dim, dtype=complex)
    for letter in word.letters:
        op = op @ _letter_operator(letter, assignment)
    return op


def assemble(poly, assignment, dim):
    """Operator sum_{r,c} |r><c| ⊗ P_{rc}(assignment) on C^side ⊗ H."""
    out = np.zeros((poly.side * dim, poly.side * dim), dtype=complex)
    for (row, col), entry in poly.entries.items():
        block = np.zeros((dim, dim), dtype=complex)
        for word, coef in entry.items():
            block += coef * word_operator(word, assignment, dim)
        out[row * dim:(row + 1) * dim, col * dim:(col + 1) * dim] += block
    return out


def evaluate(poly, assignment, state):
    """tr(rho_{AH} P(assignment)) for a state on A ⊗ H with A of dimension poly.side."""
    data = state.data if isinstance(state, DensityMatrix) else np.asarray(state, dtype=complex)
    if data.shape[0] % poly.side:
        raise ArgumentError(f"state of side {data.shape[0]} does not factor through A of dimension {poly.side}")
    dim = data.shape[0] // poly.side
    for op in assignment.values():
        if op.shape != (dim, dim):
            raise ArgumentError(f"assigned operator of shape {op.shape} does not act on H of dimension {dim}")
    return float(np.real(np.trace(data @ assemble(poly, assignment, dim))))


def operator_blocks(z, d_a):
    """Split an operator on A ⊗ H into blocks Z[a1, a2] on H (1-based keys)."""
    dim = z.shape[0] // d_a
    return {
        (a1 + 1, a2 + 1): z[a1 * dim:(a1 + 1) * dim, a2 * dim:(a2 + 1) * dim]
        for a1 in range(d_a)
        for a2 in range(d_a)
    }


def assignment_from_operators(operators, d_a, family=Z):
    """Letter assignment from one operator Z_i on A ⊗ H per quadrature node."""
    assignment = {}
    for i, z in enumerate(operators, start=1):
        for (a1, a2), block in operator_blocks(z, d_a).items():
            assignment[Letter(family, i, a1, a2)] = block
    return assignment


def sylvester_assignment(rule, rho_ah, family=Z):
    """Per-node minimisers of the variational form for D(rho_AH || I_A ⊗ rho_H)."""
    d_a = rho_ah.dims[0]
    rho_h = ptrace_array(rho_ah.data, rho_ah.dims, range(1, rho_ah.num_systems))
    sigma = np.kron(np.eye(d_a), rho_h)
    operators = [sylvester_optimizer(t, rho_ah.data, sigma) for t, _ in rule]
    return assignment_from_operators(operators, d_a, family)
