"""Dense reference computations on the truncated index set.

Everything here is allowed to cost O(N^3): full SVD factorizations, the
orthogonal projector onto the range, pseudo-inverse solves, and dual
coefficients via Gram systems.  These are the yardsticks the adaptive
routines are tested against; none of it runs inside the solvers themselves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coeffs import SparseVector

__all__ = [
    "DenseSnapshot",
    "RANK_RTOL",
    "assemble",
    "project_ran",
    "least_squares_solve",
    "dual_coefficients",
    "patch_projection_coeffs",
    "full_span_projection_coeffs",
]

RANK_RTOL = 1e-10
SIZE_GUARD = 20000


@dataclass
class DenseSnapshot:
    """Dense matrix, its SVD products, and the projector onto the range."""

    frame: object
    spec: object
    indices: tuple
    matrix: np.ndarray
    singular_values: np.ndarray
    rank: int
    projector: np.ndarray
    pinv: np.ndarray
    f_dense: np.ndarray | None = None
    _u: np.ndarray = field(repr=False, default=None)

    @property
    def sigma_max(self) -> float:
        return float(self.singular_values[0])

    @property
    def sigma_min_nonzero(self) -> float:
        return float(self.singular_values[self.rank - 1])

    def to_dense(self, v: SparseVector) -> np.ndarray:
        return self.frame.workspace().to_dense(v)

    def from_dense(self, arr) -> SparseVector:
        return self.frame.workspace().from_dense(arr)

    def kernel_dim(self) -> int:
        return len(self.indices) - self.rank


def assemble(frame, spec, f_vec: SparseVector | None = None) -> DenseSnapshot:
    """Materialize the truncated matrix and its factorization products."""
    ws = frame.workspace()
    if ws.size > SIZE_GUARD:
        raise ValueError(f"truncated set too large for the dense oracle "
                         f"({ws.size} > {SIZE_GUARD})")
    mat = ws.matrix(spec)
    u, s, vt = ws.svd(spec)
    rank = int(np.count_nonzero(s > RANK_RTOL * s[0])) if s[0] > 0 else 0
    if rank == 0:
        raise ValueError("operator has empty range")
    ur = u[:, :rank]
    projector = ur @ ur.T
    pinv = vt[:rank].T @ ((1.0 / s[:rank])[:, None] * ur.T)
    f_dense = ws.to_dense(f_vec) if f_vec is not None else None
    return DenseSnapshot(frame=frame, spec=spec, indices=ws.indices, matrix=mat,
                         singular_values=s, rank=rank, projector=projector,
                         pinv=pinv, f_dense=f_dense, _u=u)


def project_ran(snapshot: DenseSnapshot, v: SparseVector) -> SparseVector:
    """Orthogonal projection onto the range of the truncated matrix."""
    return snapshot.from_dense(snapshot.projector @ snapshot.to_dense(v))


def least_squares_solve(snapshot: DenseSnapshot, f: SparseVector) -> SparseVector:
    """Minimal-norm normal-equation solution via the pseudo-inverse."""
    return snapshot.from_dense(snapshot.pinv @ snapshot.to_dense(f))


def _gram_solve(gram: np.ndarray, load: np.ndarray) -> np.ndarray:
    """Rank-tolerant least-squares solve of a (possibly singular) Gram system."""
    u, s, vt = np.linalg.svd(gram)
    keep = s > RANK_RTOL * s[0]
    return vt[keep].T @ ((u[:, keep].T @ load) / s[keep])


def patch_projection_coeffs(frame, patch: int, gridvals) -> np.ndarray:
    """Coefficients of the L2 projection of grid-sampled data onto one patch span."""
    ws = frame.workspace()
    return _gram_solve(ws.patch_gram(patch), ws.patch_load(patch, gridvals))


def dual_coefficients(frame, patch: int, u) -> SparseVector:
    """Dual-side coefficients of u on a truncated patch span via a Gram solve.

    Synthesizing the result gives the L2-best approximation of u from the
    span of the (weighted) elements living on that patch.
    """
    ws = frame.workspace()
    coeffs = patch_projection_coeffs(frame, patch, ws.grid_values(u))
    return ws.from_dense_patch(patch, coeffs)


def full_span_projection_coeffs(frame, u) -> SparseVector:
    """L2-best approximation of u from the whole truncated frame span."""
    ws = frame.workspace()
    coeffs = _gram_solve(ws.l2_gram(), ws.analyze_dense(u))
    return ws.from_dense(coeffs)
