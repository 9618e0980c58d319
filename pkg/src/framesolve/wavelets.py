"""Piecewise-linear multiscale system on [0,1] with homogeneous Dirichlet ends.

The primal family consists of peak-one hat functions on dyadic grids: the
interior hats at the coarsest level act as scaling functions, and detail
hats at the odd nodes of each finer grid act as wavelets.  All functions
vanish at 0 and 1.  Integrals are piecewise polynomial and are computed by
composite Gauss-Legendre quadrature on the dyadic breakpoints, which is
exact for the degrees occurring here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coeffs import Kind

__all__ = [
    "ReferenceBasis",
    "PreconditionerWeights",
    "evaluate",
    "support",
    "inner_product",
    "valid_translates",
    "check_index",
]

# 4-point Gauss-Legendre rule on [-1, 1]; exact through degree 7
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


@dataclass(frozen=True)
class ReferenceBasis:
    """Primal spline family: order-2 (piecewise linear), Dirichlet ends."""

    order: int = 2
    coarsest_level: int = 1
    boundary: str = "dirichlet"

    def __post_init__(self):
        if self.order != 2:
            raise ValueError("only the piecewise-linear family (order 2) is built")
        if self.boundary != "dirichlet":
            raise ValueError("only homogeneous Dirichlet ends are supported")
        if self.coarsest_level < 1:
            raise ValueError("coarsest level must be >= 1")


@dataclass(frozen=True)
class PreconditionerWeights:
    """Diagonal Sobolev scaling: weight(level) = 2**(-sobolev_order*level)."""

    sobolev_order: float = 1.0

    def __post_init__(self):
        if self.sobolev_order < 0:
            raise ValueError("sobolev_order must be >= 0")

    def weight(self, level: int) -> float:
        return 2.0 ** (-self.sobolev_order * level)


def valid_translates(basis: ReferenceBasis, level: int, kind: Kind) -> range:
    """Translate range for a level/kind pair (empty if the pair is invalid)."""
    if kind is Kind.SCALING:
        if level < basis.coarsest_level:
            return range(0)
        return range(1, 2 ** level)
    if level <= basis.coarsest_level:
        return range(0)
    return range(1, 2 ** level, 2)


def check_index(basis: ReferenceBasis, level: int, translate: int, kind: Kind):
    rng = valid_translates(basis, level, kind)
    if translate not in rng:
        raise ValueError(
            f"index out of range for level: level={level} translate={translate} "
            f"kind={kind.label}"
        )


def evaluate(basis, level, translate, kind, x, derivative: int = 0):
    """Value (or first derivative) of the primal hat at x; 0 outside support.

    Scalars in, scalar out; arrays in, arrays out.  The derivative at the
    breakpoints themselves is reported as 0 (a measure-zero convention that
    quadrature nodes never hit).
    """
    check_index(basis, level, translate, kind)
    h = 2.0 ** (-level)
    t = np.asarray(x, dtype=float) / h - translate
    if derivative == 0:
        out = np.maximum(0.0, 1.0 - np.abs(t))
    elif derivative == 1:
        out = np.where((t > -1.0) & (t < 0.0), 1.0 / h,
                       np.where((t > 0.0) & (t < 1.0), -1.0 / h, 0.0))
    else:
        raise ValueError("derivative must be 0 or 1")
    if np.isscalar(x):
        return float(out)
    return out


def support(basis, level, translate, kind):
    """Closed support interval [(k-1)h, (k+1)h], h = 2**-level."""
    check_index(basis, level, translate, kind)
    h = 2.0 ** (-level)
    return ((translate - 1) * h, (translate + 1) * h)


def gauss_cells(breakpoints):
    """Composite GL nodes and weights for the cells of a breakpoint list."""
    bp = np.asarray(breakpoints, dtype=float)
    lo, hi = bp[:-1], bp[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    weights = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return nodes, weights


def inner_product(f, basis, level, translate, kind, derivative_order: int = 0) -> float:
    """Integral of f times the (possibly differentiated) hat over its support."""
    if derivative_order not in (0, 1):
        raise ValueError("derivative_order must be 0 or 1")
    check_index(basis, level, translate, kind)
    h = 2.0 ** (-level)
    breaks = [(translate - 1) * h, translate * h, (translate + 1) * h]
    nodes, weights = gauss_cells(breaks)
    fv = np.asarray(f(nodes), dtype=float)
    psi = evaluate(basis, level, translate, kind, nodes, derivative=derivative_order)
    return float(np.dot(weights, fv * psi))
