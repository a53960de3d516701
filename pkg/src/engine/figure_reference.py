"""Published Werner-state bound values on the grid p = 0, 0.1, ..., 0.5.

Columns: ``ubN`` heuristic upper bound with d_D = d_E = N, ``lbM`` level-1 SDP
lower bound with M quadrature nodes.
"""
import math

from src.errors import ArgumentError

GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)

REFERENCE = {
    2: {
        "ub4": (1.000, 0.6419, 0.3979, 0.2127, 0.0810, 0.0000),
        "ub5": (1.000, 0.6419, 0.3976, 0.2102, 0.0753, 0.0000),
        "ub10": (1.0000, 0.6419, 0.3979, 0.2031, 0.0627, 0.0000),
        "lb8": (0.9784, 0.6300, 0.3795, 0.1891, 0.0472, -0.0144),
    },
    3: {
        "lb10": (0.7023, 0.4521, 0.2724, 0.1261, 0.0268, -0.02876),
        "ub4": (0.7924, 0.6293, 0.4972, 0.3286, 0.2019, 0.0968),
        "ub5": (0.7924, 0.6009, 0.4482, 0.3047, 0.1876, 0.0889),
    },
}


def lower_column(d, m):
    name = f"lb{m}"
    return name if name in REFERENCE.get(d, {}) else None


def upper_column(d, d_D, d_E):
    name = f"ub{d_D}"
    return name if d_D == d_E and name in REFERENCE.get(d, {}) else None


def reference_value(d, column, p):
    table = REFERENCE.get(d)
    if table is None or column not in table:
        raise ArgumentError(f"no reference column {column!r} for d={d}")
    for pos, grid_p in enumerate(GRID):
        if math.isclose(p, grid_p, abs_tol=1e-9):
            return table[column][pos]
    return None


def deviation(d, column, p, value):
    """value - reference, or None when the point is off the published grid."""
    if column is None:
        return None
    ref = reference_value(d, column, p)
    return None if ref is None else value - ref
