"""Adaptive inexact damped Richardson iteration on the normal equations.

Outer iterations shrink a tolerance schedule geometrically; each runs K
damped Richardson steps assembled from tolerance-contracted right-hand side
and matrix-product calls, then thresholds the iterate.  The projected error
onto the range of the discretized operator is guaranteed to track the
schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import operators
from .coeffs import SparseVector, coarse
from .counting import Counters

__all__ = ["SolveConfig", "ResidualHistory", "rhs", "solve"]


@dataclass(frozen=True)
class SolveConfig:
    """Schedule constants for the damped normal-equation iteration."""

    theta: float
    k_inner: int
    spectral: operators.SpectralEstimates
    epsilon_target: float

    def __post_init__(self):
        if not 0 < self.theta < 1.0 / 3.0:
            raise ValueError("theta must lie in (0, 1/3)")
        if self.k_inner < 1:
            raise ValueError("k_inner must be >= 1")
        if not self.epsilon_target > 0:
            raise ValueError("epsilon_target must be positive")
        if not 3.0 * self.spectral.rho ** self.k_inner < self.theta:
            raise ValueError("need 3 * rho**K < theta; increase k_inner")

    @classmethod
    def from_spectrum(cls, spectral, epsilon_target, theta=0.3, shrink=0.25):
        """Smallest K with 3*rho**K <= shrink*theta (shrink < 1 speeds the
        outer schedule at the price of more inner steps)."""
        if spectral.rho == 0.0:
            k = 1
        else:
            k = max(1, math.ceil(math.log(shrink * theta / 3.0)
                                 / math.log(spectral.rho)))
        return cls(theta=theta, k_inner=k, spectral=spectral,
                   epsilon_target=epsilon_target)

    @property
    def shrink_factor(self) -> float:
        return 3.0 * self.spectral.rho ** self.k_inner / self.theta


@dataclass
class HistoryRow:
    j: int
    epsilon: float
    support: int
    residual: float | None
    entry_evals: int
    touches: int
    injected_bound: float


@dataclass
class ResidualHistory:
    """Per-outer-iteration log of the tolerance schedule and work counters."""

    rows: list = field(default_factory=list)
    iterates: list = field(default_factory=list)       # post-coarsening
    raw_iterates: list = field(default_factory=list)   # before coarsening

    def epsilons(self):
        return [r.epsilon for r in self.rows]

    def to_csv(self) -> str:
        lines = ["j,epsilon_j,support,residual,entry_evals,touches"]
        for r in self.rows:
            res = "" if r.residual is None else repr(r.residual)
            lines.append(f"{r.j},{r.epsilon!r},{r.support},{res},"
                         f"{r.entry_evals},{r.touches}")
        return "\n".join(lines) + "\n"


def rhs(target: SparseVector, epsilon: float) -> SparseVector:
    """Finite right-hand side within epsilon of the precomputed target."""
    return coarse(epsilon, target)


def solve(frame, spec, f_vec: SparseVector, config: SolveConfig, *,
          rhs_slack: float = 0.0, keep_iterates: bool = False,
          residual_snapshot=None, counters: Counters | None = None):
    """Adaptive damped Richardson iteration on the normal equations.

    Returns the final iterate and the outer-iteration history.  ``rhs_slack``
    declares that ``f_vec`` itself carries at most that much l2 error against
    the true right-hand side; every internal right-hand-side budget is
    reduced accordingly, so the returned guarantee still refers to the true
    data.  ``residual_snapshot`` (a dense oracle snapshot) enables residual
    logging; it never influences the iteration.
    """
    counters = counters if counters is not None else Counters()
    ws = frame.workspace()
    ws.matrix(spec)
    spectral = config.spectral
    alpha = spectral.alpha_star
    norm_adj = spectral.norm_a
    kk = config.k_inner
    theta = config.theta

    eps = spectral.inv_norm_on_range * (f_vec.norm() + rhs_slack)
    if rhs_slack > 0:
        smallest_rhs_tol = (theta * config.shrink_factor * config.epsilon_target
                            / (12.0 * alpha * kk * norm_adj))
        if rhs_slack > 0.5 * smallest_rhs_tol * (1.0 + 1e-9):
            raise ValueError("rhs_slack exceeds the right-hand-side budget")

    def banded(dense_, tol, adjoint):
        cols = np.nonzero(dense_)[0]
        return operators.banded_product_dense(ws, spec, cols, dense_[cols],
                                              tol, counters, adjoint=adjoint)

    history = ResidualHistory()
    v = SparseVector()
    j = 0
    while eps > config.epsilon_target:
        j += 1
        eps = 3.0 * spectral.rho ** kk * eps / theta
        tol_rhs = theta * eps / (12.0 * alpha * kk * norm_adj)
        tol_adj = theta * eps / (12.0 * alpha * kk)
        g = rhs(f_vec, max(tol_rhs - rhs_slack, 0.0))
        counters.add_touches(len(f_vec))
        f_j = banded(ws.to_dense(g), tol_adj, adjoint=True)
        v_k = ws.to_dense(v)
        for _ in range(kk):
            w = banded(v_k, tol_rhs, adjoint=False)
            v_k = v_k - alpha * (banded(w, tol_adj, adjoint=True) - f_j)
            counters.add_touches(int(np.count_nonzero(v_k)))
        if not np.all(np.isfinite(v_k)):
            raise ValueError("numerical breakdown in the inner iteration")
        v = coarse((1.0 - theta) * eps, ws.from_dense(v_k))
        counters.add_touches(int(np.count_nonzero(v_k)))
        residual = None
        if residual_snapshot is not None:
            rv = (residual_snapshot.matrix @ residual_snapshot.to_dense(v)
                  - residual_snapshot.to_dense(f_vec))
            residual = float(np.linalg.norm(rv))
        injected = kk * alpha * (2.0 * tol_adj + 2.0 * norm_adj * tol_rhs)
        history.rows.append(HistoryRow(
            j=j, epsilon=eps, support=len(v), residual=residual,
            entry_evals=counters.entry_evals, touches=counters.touches,
            injected_bound=injected))
        if keep_iterates:
            history.iterates.append(v)
            history.raw_iterates.append(ws.from_dense(v_k))
    return v, history
