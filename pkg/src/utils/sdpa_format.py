"""SDPA sparse (dat-s) writer and solver result parser.

Exported instances use two blocks: the PSD moment block and a diagonal block
holding each equality as a pair of opposite inequalities.
"""
import io
import re

import numpy as np
import scipy.sparse as sp

from src.errors import ArgumentError, SolverProtocolError

NUMBER = "%.17g"
HEADER_PREFIX = "* squash-bounds"


def _fmt(value):
    return NUMBER % float(value)


def _block_entries(coeffs, const, side):
    """Upper-triangle (matno, i, j, value) of F_0..F_n, 1-based, in canonical order."""
    entries = []
    const = np.asarray(const, dtype=float).reshape(-1)
    for flat in np.flatnonzero(const):
        i, j = divmod(int(flat), side)
        if i <= j:
            entries.append((0, i + 1, j + 1, const[flat]))
    cols = sp.csc_matrix(coeffs)
    cols.sort_indices()
    for p in range(cols.shape[1]):
        start, stop = cols.indptr[p], cols.indptr[p + 1]
        for flat, value in zip(cols.indices[start:stop], cols.data[start:stop]):
            if value == 0.0:
                continue
            i, j = divmod(int(flat), side)
            if i <= j:
                entries.append((p + 1, i + 1, j + 1, value))
    entries.sort()
    return entries


def header_lines(instance):
    meta = instance.metadata
    dims = f"{meta.get('d_A', '?')}x{meta.get('d_B', '?')}"
    return [
        f"{HEADER_PREFIX} m={meta.get('m', '?')} k={meta.get('k', '?')} dims={dims} "
        f"state={meta.get('state_hash', '?')} basis={meta.get('basis_size', '?')}",
        f"* variables={instance.num_vars} block={instance.block_side} equalities={instance.num_constraints}",
    ]


def write_sdpa(instance, target):
    """Write ``instance`` in dat-s form to a path or text stream.

    Output is deterministic for a given instance: entries are ordered by
    matrix, block, row and column, numbers carry 17 significant digits.
    """
    if isinstance(target, (str, bytes)) or hasattr(target, "__fspath__"):
        with open(target, "w", encoding="utf-8") as handle:
            write_sdpa(instance, handle)
        return
    n_eq = instance.num_constraints
    side = instance.block_side
    out = target
    for line in header_lines(instance):
        out.write(line + "\n")
    out.write(f"{instance.num_vars} = mDIM\n")
    out.write(f"{2 if n_eq else 1} = nBLOCK\n")
    out.write(f"{side} -{2 * n_eq} = bLOCKsTRUCT\n" if n_eq else f"{side} = bLOCKsTRUCT\n")
    out.write(" ".join(_fmt(v) for v in instance.c) + "\n")

    lines = [(mat, 1, i, j, v) for mat, i, j, v in _block_entries(instance.coeffs, instance.const, side)]
    if n_eq:
        eq = sp.csr_matrix(instance.eq_matrix)
        eq.sort_indices()
        for row in range(n_eq):
            rhs = float(instance.eq_rhs[row])
            pos, neg = 2 * row + 1, 2 * row + 2
            if rhs != 0.0:
                lines.append((0, 2, pos, pos, rhs))
                lines.append((0, 2, neg, neg, -rhs))
            start, stop = eq.indptr[row], eq.indptr[row + 1]
            for p, value in zip(eq.indices[start:stop], eq.data[start:stop]):
                lines.append((int(p) + 1, 2, pos, pos, value))
                lines.append((int(p) + 1, 2, neg, neg, -value))
    lines.sort()
    for mat, blk, i, j, value in lines:
        out.write(f"{mat} {blk} {i} {j} {_fmt(value)}\n")


def sdpa_text(instance):
    buf = io.StringIO()
    write_sdpa(instance, buf)
    return buf.getvalue()


def read_sdpa_header(source):
    """Recover the problem description from the comment header of an exported file."""
    text = source if "\n" in source else open(source, encoding="utf-8").read()
    for line in text.splitlines():
        if line.startswith(HEADER_PREFIX):
            fields = dict(re.findall(r"(\w+)=(\S+)", line))
            d_a, _, d_b = fields.get("dims", "x").partition("x")
            return {
                "m": int(fields["m"]),
                "k": int(fields["k"]),
                "d_A": int(d_a),
                "d_B": int(d_b),
                "state_hash": fields.get("state"),
                "basis_size": int(fields["basis"]),
            }
    raise ArgumentError("no squash-bounds header in SDPA file")


class SdpaResultParser:
    def __init__(self):
        self.phase_pattern = re.compile(r'phase\.value\s*=\s*(\w+)')
        self.iteration_pattern = re.compile(r'Iteration\s*=\s*(\d+)')
        self.primal_pattern = re.compile(r'objValPrimal\s*=\s*([-+0-9.eE]+)')
        self.dual_pattern = re.compile(r'objValDual\s*=\s*([-+0-9.eE]+)')
        self.xvec_pattern = re.compile(r'xVec\s*=\s*\{([^}]*)\}')

    def parse(self, text):
        """Extract phase, objective values and the x vector from solver output."""
        phase = self.phase_pattern.search(text)
        primal = self.primal_pattern.search(text)
        dual = self.dual_pattern.search(text)
        if not (phase and primal and dual):
            raise SolverProtocolError("could not parse SDPA result", output=text)

        iterations = self.iteration_pattern.search(text)
        x = None
        xvec = self.xvec_pattern.search(text)
        if xvec:
            x = np.array([float(v) for v in xvec.group(1).replace(",", " ").split()])
        return {
            "phase": phase.group(1),
            "primal": float(primal.group(1)),
            "dual": float(dual.group(1)),
            "iterations": int(iterations.group(1)) if iterations else None,
            "x": x,
        }
