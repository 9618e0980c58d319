"""Discretized elliptic operator on the truncated frame.

The bi-infinite preconditioned stiffness matrix is materialized on the
truncated index set; ``entry`` computes single matrix elements by direct
quadrature, while ``apply``/``apply_adjoint`` realize tolerance-contracted
products through level-banded column truncation with certified tail bounds
from a precomputed decay table.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coeffs import SparseVector
from .frame import decode_translate_2d
from .wavelets import gauss_cells

__all__ = [
    "OperatorSpec",
    "SpectralEstimates",
    "entry",
    "matrix",
    "apply",
    "apply_adjoint",
    "estimate_spectrum",
]


@dataclass(frozen=True)
class OperatorSpec:
    """Constant coefficients of the non-symmetric form

    a(u, v) = diffusion*(u', v') + convection*(u', v) + reaction*(u, v).
    """

    diffusion: float
    convection: float = 0.0
    reaction: float = 0.0

    def __post_init__(self):
        if not self.diffusion > 0:
            raise ValueError("diffusion must be positive")
        if self.reaction < 0:
            raise ValueError("reaction must be >= 0")


@dataclass(frozen=True)
class SpectralEstimates:
    """Extremal eigenvalues of the normal-equation operator and the damping."""

    lambda_max: float
    lambda_min: float
    alpha_star: float
    rho: float

    def __post_init__(self):
        if not 0 < self.lambda_min <= self.lambda_max:
            raise ValueError("need 0 < lambda_min <= lambda_max")
        if not 0 < self.alpha_star < 2.0 / self.lambda_max:
            raise ValueError("alpha_star must lie in (0, 2/lambda_max)")
        expected = max(self.alpha_star * self.lambda_max - 1.0,
                       1.0 - self.alpha_star * self.lambda_min)
        if not self.rho < 1.0 or abs(self.rho - expected) > 1e-12 * max(1.0, expected):
            raise ValueError("rho does not match the damping formula or is >= 1")

    @classmethod
    def from_extremes(cls, lambda_max, lambda_min):
        alpha = 2.0 / (lambda_max + lambda_min)
        rho = max(alpha * lambda_max - 1.0, 1.0 - alpha * lambda_min)
        return cls(lambda_max, lambda_min, alpha, rho)

    @property
    def norm_a(self) -> float:
        """Spectral norm of the frame matrix (= its adjoint's norm)."""
        return float(np.sqrt(self.lambda_max))

    @property
    def inv_norm_on_range(self) -> float:
        """Norm of the inverse restricted to the range."""
        return float(1.0 / np.sqrt(self.lambda_min))


def _check_in_set(ws, idx):
    if idx not in ws.pos:
        raise ValueError(f"index outside the truncated set: {idx}")


def _hat_breaks(level, translate, a, length):
    h = 2.0 ** (-level)
    return [a + length * (translate - 1) * h,
            a + length * translate * h,
            a + length * (translate + 1) * h]


def _pair_quads_1d(levA, kA, pA, levB, kB, pB):
    """(I00, I01, I11) between two mapped hats; I01 integrates B' * A."""
    from .grid import _hat_values
    loA, hiA = _hat_breaks(levA, kA, pA[0], pA[1])[0::2]
    loB, hiB = _hat_breaks(levB, kB, pB[0], pB[1])[0::2]
    lo, hi = max(loA, loB), min(hiA, hiB)
    if hi <= lo:
        return 0.0, 0.0, 0.0
    breaks = sorted({lo, hi,
                     *(b for b in _hat_breaks(levA, kA, pA[0], pA[1]) if lo < b < hi),
                     *(b for b in _hat_breaks(levB, kB, pB[0], pB[1]) if lo < b < hi)})
    nodes, w = gauss_cells(np.array(breaks))
    ya = (nodes - pA[0]) / pA[1]
    yb = (nodes - pB[0]) / pB[1]
    va = _hat_values(levA, kA, ya)
    vb = _hat_values(levB, kB, yb)
    da = _hat_values(levA, kA, ya, derivative=1) / pA[1]
    db = _hat_values(levB, kB, yb, derivative=1) / pB[1]
    return (float(w @ (va * vb)), float(w @ (db * va)), float(w @ (da * db)))


def entry(frame, spec: OperatorSpec, row, col) -> float:
    """Single weighted matrix element by direct quadrature on the overlap.

    Exactly zero when the supports are disjoint.
    """
    ws = frame.workspace()
    _check_in_set(ws, row)
    _check_in_set(ws, col)
    wgt = frame.weights.weight(row.level) * frame.weights.weight(col.level)
    if frame.dim == 1:
        pr = frame.patches[row.patch]
        pc = frame.patches[col.patch]
        scale = wgt / np.sqrt(pr.length * pc.length)
        i00, i01, i11 = _pair_quads_1d(row.level, row.translate, (pr.start, pr.length),
                                       col.level, col.translate, (pc.start, pc.length))
        return scale * (spec.diffusion * i11 + spec.convection * i01
                        + spec.reaction * i00)
    if spec.convection:
        raise ValueError("convection terms are not supported on 2D frames")
    rr = frame.patches[row.patch].rect
    rc = frame.patches[col.patch].rect
    rkx, rky = decode_translate_2d(row.translate, row.level)
    ckx, cky = decode_translate_2d(col.translate, col.level)
    amp = 2.0 ** (row.level + col.level)
    scale = (wgt * amp
             / np.sqrt(frame.patches[row.patch].det * frame.patches[col.patch].det))
    x00, _, x11 = _pair_quads_1d(row.level, rkx, (rr[0], rr[1] - rr[0]),
                                 col.level, ckx, (rc[0], rc[1] - rc[0]))
    y00, _, y11 = _pair_quads_1d(row.level, rky, (rr[2], rr[3] - rr[2]),
                                 col.level, cky, (rc[2], rc[3] - rc[2]))
    return scale * (spec.diffusion * (x11 * y00 + x00 * y11)
                    + spec.reaction * (x00 * y00))


def matrix(frame, spec: OperatorSpec) -> np.ndarray:
    """Dense truncated matrix (cached on the frame workspace)."""
    return frame.workspace().matrix(spec)


def banded_product_dense(ws, spec, cols, vals, epsilon, counters=None,
                         adjoint=False):
    """Dense core of the certified banded product; shared with the solver.

    Per-column level bands come from the decay table; within each column
    level the widest requested band is used (only enlarging the included
    set), so the summed omitted-tail bounds stay below epsilon.
    """
    out = np.zeros(ws.size)
    if len(cols) == 0:
        return out
    col_tails, row_tails = ws.tails(spec)
    tails = row_tails if adjoint else col_tails
    bmax = tails.shape[1] - 1
    if epsilon <= 0.0:
        bands = np.full(len(cols), bmax)
    else:
        budget = epsilon / len(cols)
        ok = np.abs(vals)[:, None] * tails[cols] <= budget
        bands = np.argmax(ok, axis=1)
    if counters is not None:
        counters.add_touches(len(cols))
    if bands.min() == bmax:
        padded = np.zeros(ws.size)
        padded[cols] = vals
        mat = ws.matrix(spec)
        out += (mat.T if adjoint else mat) @ padded
        if counters is not None:
            counters.add_entries(ws.size * len(cols))
            counters.add_touches(int(np.count_nonzero(out)))
        return out
    blocks = ws.level_blocks(spec)
    col_levels = ws.levels[cols]
    for lc in ws.level_values:
        sel = col_levels == lc
        if not sel.any():
            continue
        band = int(bands[sel].max())
        pos_c = ws.level_pos[lc]
        padded = np.zeros(len(pos_c))
        padded[np.searchsorted(pos_c, cols[sel])] = vals[sel]
        for lr in ws.level_values:
            if abs(lr - lc) > band:
                continue
            block = blocks[(lc, lr)].T if adjoint else blocks[(lr, lc)]
            out[ws.level_pos[lr]] += block @ padded
            if counters is not None:
                counters.add_entries(block.size)
    if counters is not None:
        counters.add_touches(int(np.count_nonzero(out)))
    return out


def _apply_banded(ws, spec, v, epsilon, counters, adjoint):
    if len(v) == 0:
        return SparseVector()
    for idx in v:
        _check_in_set(ws, idx)
    cols = np.array([ws.pos[idx] for idx in v])
    out = banded_product_dense(ws, spec, cols, v.values(), epsilon, counters,
                               adjoint=adjoint)
    return ws.from_dense(out)


def apply(frame, spec: OperatorSpec, v: SparseVector, epsilon: float,
          counters=None) -> SparseVector:
    """Product with the truncated matrix within l2 error epsilon.

    Per-column level bands are chosen from the decay table so the summed
    column tail bounds stay below epsilon; epsilon = 0 forces the exact
    truncated product.
    """
    return _apply_banded(frame.workspace(), spec, v, epsilon, counters,
                         adjoint=False)


def apply_adjoint(frame, spec: OperatorSpec, v: SparseVector, epsilon: float,
                  counters=None) -> SparseVector:
    """Same contract as :func:`apply` for the transposed matrix."""
    return _apply_banded(frame.workspace(), spec, v, epsilon, counters,
                         adjoint=True)


def estimate_spectrum(frame, spec: OperatorSpec, max_iter: int = 200,
                      rel_tol: float = 1e-8) -> SpectralEstimates:
    """Damping data: power iteration for lambda_max of A*A, dense SVD for
    the smallest nonzero squared singular value, optimal damping factor."""
    ws = frame.workspace()
    mat = ws.matrix(spec)
    if not np.any(mat):
        raise ValueError("operator has empty range")
    # deterministic start with no symmetry alignment (an all-ones start can be
    # exactly orthogonal to the dominant eigenvector on symmetric covers)
    x = np.random.default_rng(0).standard_normal(ws.size)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = mat.T @ (mat @ x)
        new = float(np.linalg.norm(y))
        if new == 0.0:
            raise ValueError("operator has empty range")
        x = y / new
        if abs(new - lam) <= rel_tol * new:
            lam = new
            break
        lam = new
    svals = ws.svd(spec)[1]
    keep = svals > 1e-10 * svals[0]
    sigma_min = float(svals[keep][-1])
    return SpectralEstimates.from_extremes(lam, sigma_min ** 2)
