"""Outer fixed-point iteration for the quadratically nonlinear problem.

Each sweep moves the quadratic term to the right-hand side and solves the
resulting linear problem adaptively at a geometrically tightening tolerance.
Certification of the smallness condition produces the contraction constant,
the invariant-ball radius, and a safe starting tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import operators
from .coeffs import SparseVector, axpy, coarse
from .counting import Counters
from .solve import solve as _run_solve

__all__ = [
    "NonlinearSpec",
    "FixptConfig",
    "CertificationError",
    "apply_nonlinear",
    "measure_frame_norm",
    "measure_nonlinear_norm",
    "check_contraction",
    "fixpt",
]


class CertificationError(ValueError):
    """Raised when the smallness condition for the fixed point fails."""

    def __init__(self, message, gamma, bound, datum_norm):
        super().__init__(message)
        self.gamma = gamma
        self.bound = bound
        self.datum_norm = datum_norm


@dataclass(frozen=True)
class NonlinearSpec:
    """Coefficient of the quadratic trilinear form strength * int(u*v*w)."""

    strength: float


@dataclass(frozen=True)
class FixptConfig:
    """Constants of the discrete fixed-point schedule."""

    epsilon0: float
    lipschitz: float
    radius: float
    epsilon_target: float

    def __post_init__(self):
        if not self.epsilon_target > 0:
            raise ValueError("epsilon_target must be positive")
        if not self.lipschitz < self.epsilon0 < self.radius:
            raise ValueError("need lipschitz < epsilon0 < radius")
        if not self.epsilon0 < 1.0:
            raise ValueError("epsilon0 must be < 1 for a decreasing schedule")


def apply_nonlinear(frame, nl: NonlinearSpec, v: SparseVector, epsilon: float,
                    counters: Counters | None = None) -> SparseVector:
    """Quadratic image of v against the frame, coarsened to tolerance epsilon.

    The exact value integrates the squared synthesized expansion against
    every (weighted) frame element; the integrand is piecewise cubic, so the
    quadrature is exact and only the final thresholding perturbs the result.
    """
    ws = frame.workspace()
    if len(v) == 0:
        return SparseVector()
    dense = ws.to_dense(v)
    image = nl.strength * ws.nonlinear_dense(dense)
    if counters is not None:
        counters.add_entries(image.size)
        counters.add_touches(len(v))
    return coarse(epsilon, ws.from_dense(image))


def measure_frame_norm(frame) -> float:
    """Measured synthesis norm on the truncated span: l2 coefficients -> H1."""
    gram = frame.workspace().h1_gram()
    return float(np.sqrt(np.linalg.eigvalsh(gram)[-1]))


def measure_nonlinear_norm(frame, nl: NonlinearSpec, iters: int = 60) -> float:
    """Measured norm of the quadratic form on the truncated span.

    Alternating maximization of strength*int(u*v*w) over H1-normalized span
    members; the trilinear form is symmetric, so the iteration climbs to the
    dominant symmetric singular value.  Deterministic start.
    """
    if nl.strength == 0.0:
        return 0.0
    ws = frame.workspace()
    if frame.dim != 1:
        raise NotImplementedError("quadratic terms are built for 1D frames only")
    gram = ws.h1_gram()
    evals, evecs = np.linalg.eigh(gram)
    keep = evals > 1e-12 * evals[-1]
    basis = evecs[:, keep] / np.sqrt(evals[keep])  # H1-orthonormal span basis
    samples = ws.vals.T @ basis                    # grid values of basis members
    weighted = samples * ws.qweights[:, None]
    z = np.ones(basis.shape[1])
    z /= np.linalg.norm(z)
    value = 0.0
    for _ in range(iters):
        f1 = samples @ z
        g = weighted.T @ (f1 * f1)
        new = float(np.linalg.norm(g))
        if new == 0.0:
            return 0.0
        z = g / new
        if abs(new - value) <= 1e-12 * new:
            value = new
            break
        value = new
    return abs(nl.strength) * value


def check_contraction(frame, spec, nl: NonlinearSpec,
                      l_vec: SparseVector) -> "FixptCertificate":
    """Verify the smallness condition and derive the schedule constants.

    gamma = 2 * ||inverse on range|| * ||F||^3 * ||A1|| from measured
    constants; the datum must satisfy ||l|| < (2*gamma*||inverse||)^{-1}
    strictly.  The returned radius sits halfway between the smaller root of
    the invariance quadratic and its peak, which keeps the Lipschitz
    constant below one with margin.
    """
    from . import oracle
    snapshot = oracle.assemble(frame, spec)
    inv_norm = 1.0 / snapshot.sigma_min_nonzero
    frame_norm = measure_frame_norm(frame)
    nl_norm = measure_nonlinear_norm(frame, nl)
    datum = l_vec.norm()
    quad = nl_norm * frame_norm ** 3
    gamma = 2.0 * inv_norm * quad
    if quad == 0.0:
        # linear problem: any ball containing the solution works
        radius = max(1.0, 2.0 * inv_norm * datum)
        cert = FixptCertificate(gamma=0.0, lipschitz=0.0, radius=radius,
                                epsilon0=min(0.6, radius / 2.0),
                                inv_norm=inv_norm, frame_norm=frame_norm,
                                nl_norm=nl_norm, datum_norm=datum, bound=math.inf)
        return cert
    bound = 1.0 / (4.0 * inv_norm ** 2 * quad)
    if not datum < bound:
        raise CertificationError(
            f"data too large: fixed point not certified "
            f"(gamma={gamma:.6g}, |l|={datum:.6g}, bound={bound:.6g})",
            gamma=gamma, bound=bound, datum_norm=datum)
    if gamma >= 1.0:
        # L = gamma*r < eps0 < r is unsatisfiable for any admissible radius
        raise CertificationError(
            f"data too large: contraction constant gamma={gamma:.6g} >= 1 "
            f"leaves no valid schedule", gamma=gamma, bound=bound,
            datum_norm=datum)
    # roots of r*(sigma_min - quad*r) = |l|; any radius strictly between the
    # smaller root and the peak 1/gamma certifies invariance + contraction
    sigma = 1.0 / inv_norm
    disc = math.sqrt(sigma ** 2 - 4.0 * quad * datum)
    r_small = (sigma - disc) / (2.0 * quad)
    r_peak = sigma / (2.0 * quad)      # = 1/gamma
    radius = min(max(6.0 * r_small, 0.1 * r_peak), 0.5 * (r_small + r_peak))
    lipschitz = gamma * radius
    eps0 = 0.5 * (lipschitz + min(radius, 1.0))
    return FixptCertificate(gamma=gamma, lipschitz=lipschitz, radius=radius,
                            epsilon0=eps0, inv_norm=inv_norm,
                            frame_norm=frame_norm, nl_norm=nl_norm,
                            datum_norm=datum, bound=bound)


@dataclass(frozen=True)
class FixptCertificate:
    """Measured constants plus a ready-to-use schedule configuration."""

    gamma: float
    lipschitz: float
    radius: float
    epsilon0: float
    inv_norm: float
    frame_norm: float
    nl_norm: float
    datum_norm: float
    bound: float

    def config(self, epsilon_target: float) -> FixptConfig:
        return FixptConfig(epsilon0=self.epsilon0, lipschitz=self.lipschitz,
                           radius=self.radius, epsilon_target=epsilon_target)


@dataclass
class FixptHistoryRow:
    i: int
    epsilon: float
    support: int
    inner_solve_iters: int
    nl_entry_evals: int


@dataclass
class FixptHistory:
    rows: list = field(default_factory=list)
    iterates: list = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["i,epsilon_i,support,inner_solve_iters,nl_entry_evals"]
        for r in self.rows:
            lines.append(f"{r.i},{r.epsilon!r},{r.support},"
                         f"{r.inner_solve_iters},{r.nl_entry_evals}")
        return "\n".join(lines) + "\n"


def fixpt(frame, spec, nl: NonlinearSpec, l_vec: SparseVector,
          config: FixptConfig, solve_config_factory, *,
          keep_iterates: bool = False, counters: Counters | None = None):
    """Discrete fixed-point iteration driven by the adaptive linear solver.

    ``solve_config_factory(epsilon)`` must return a SolveConfig with that
    target tolerance.  The quadratic term is evaluated at a tolerance folded
    into the inner solver's right-hand-side budget, so each sweep's accuracy
    contract refers to the exact nonlinear datum.
    """
    counters = counters if counters is not None else Counters()
    eps0 = config.epsilon0
    lip = config.lipschitz
    target = config.epsilon_target
    max_iters = 10 * math.ceil(-math.log10(target)) + 20

    history = FixptHistory()
    v = SparseVector()
    i = 0
    eps_i = eps0
    while True:
        gate = ((eps0 - lip) / (eps0 * (eps0 - lip * (lip / eps0) ** i))
                * (target - lip ** i * config.radius))
        if not eps_i > gate or i >= max_iters:
            break
        eps_next = eps0 ** (i + 1)
        sconf = solve_config_factory(eps_next)
        # half of the smallest right-hand-side budget the inner solver will use
        slack = 0.5 * (sconf.theta * sconf.shrink_factor * eps_next
                       / (12.0 * sconf.spectral.alpha_star * sconf.k_inner
                          * sconf.spectral.norm_a))
        nl_before = counters.entry_evals
        image = apply_nonlinear(frame, nl, v, slack, counters)
        nl_cost = counters.entry_evals - nl_before
        f_vec = axpy(-1.0, image, l_vec)
        v, inner_hist = _run_solve(frame, spec, f_vec, sconf,
                                   rhs_slack=slack, counters=counters)
        i += 1
        eps_i = eps_next
        history.rows.append(FixptHistoryRow(
            i=i, epsilon=eps_next, support=len(v),
            inner_solve_iters=len(inner_hist.rows), nl_entry_evals=nl_cost))
        if keep_iterates:
            history.iterates.append(v)
    return v, history
