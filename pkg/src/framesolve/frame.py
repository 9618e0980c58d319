"""Aggregated frames over overlapping patch covers.

A cover of the domain by affinely mapped reference boxes carries one copy of
the reference multiscale family per patch; the union of the lifted families,
truncated at a finite level, is the computational frame.  Scalar lifting
normalizes by the Jacobian determinant; the Piola-type lifting for vector
fields is provided as a standalone transform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coeffs import FrameIndex, Kind, SparseVector
from .wavelets import PreconditionerWeights, ReferenceBasis, evaluate

__all__ = [
    "Patch1D",
    "Patch2D",
    "AggregatedFrame",
    "lift_scalar",
    "lift_piola",
    "synthesize",
    "analyze",
    "decompose",
    "parse_frame_text",
    "load_frame_file",
]


@dataclass(frozen=True)
class Patch1D:
    """Affine map x -> start + length*x from the reference interval."""

    start: float
    length: float

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("patch length must be positive")

    dim = 1

    def to_ref(self, x):
        return (np.asarray(x, dtype=float) - self.start) / self.length

    def from_ref(self, y):
        return self.start + self.length * np.asarray(y, dtype=float)

    @property
    def det(self) -> float:
        return self.length

    @property
    def interval(self):
        return (self.start, self.start + self.length)


@dataclass(frozen=True)
class Patch2D:
    """Affine map x -> offset + linear @ x from the reference square."""

    offset: tuple
    linear: tuple  # ((m11, m12), (m21, m22))

    def __post_init__(self):
        m = np.asarray(self.linear, dtype=float)
        if m.shape != (2, 2) or abs(np.linalg.det(m)) < 1e-14:
            raise ValueError("patch linear map must be an invertible 2x2 matrix")

    dim = 2

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.linear, dtype=float)

    @property
    def det(self) -> float:
        return abs(float(np.linalg.det(self.matrix)))

    def to_ref(self, x):
        x = np.asarray(x, dtype=float)
        return np.linalg.solve(self.matrix, (x - np.asarray(self.offset)).T).T

    def from_ref(self, y):
        y = np.asarray(y, dtype=float)
        return np.asarray(self.offset) + (self.matrix @ y.T).T

    def is_axis_aligned(self) -> bool:
        m = self.matrix
        return m[0, 1] == 0.0 and m[1, 0] == 0.0 and m[0, 0] > 0 and m[1, 1] > 0

    @property
    def rect(self):
        """Bounding (x0, x1, y0, y1) for an axis-aligned patch."""
        if not self.is_axis_aligned():
            raise ValueError("rect is defined for axis-aligned patches only")
        ox, oy = self.offset
        return (ox, ox + self.matrix[0, 0], oy, oy + self.matrix[1, 1])


def _overlap_1d(a, b):
    lo = max(a[0], b[0])
    hi = min(a[1], b[1])
    return hi - lo


class AggregatedFrame:
    """Patch cover + reference family + preconditioner weights, truncated at J.

    Immutable after construction; the quadrature/assembly workspace is built
    lazily and shared by all modules.
    """

    def __init__(self, patches, reference=None, weights=None, max_level=4):
        patches = tuple(patches)
        if not patches:
            raise ValueError("frame needs at least one patch")
        dim = patches[0].dim
        if any(p.dim != dim for p in patches):
            raise ValueError("all patches must have the same dimension")
        reference = reference or ReferenceBasis()
        weights = weights or PreconditionerWeights()
        if max_level < reference.coarsest_level:
            raise ValueError("max_level must be >= the coarsest level")
        self.patches = patches
        self.reference = reference
        self.weights = weights
        self.max_level = int(max_level)
        self.dim = dim
        self._check_cover()
        self._ws = None

    def _check_cover(self):
        if self.dim == 1:
            ivs = sorted(p.interval for p in self.patches)
            for left, right in zip(ivs, ivs[1:]):
                if _overlap_1d(left, right) <= 0:
                    raise ValueError("consecutive patches must overlap with positive length")
        else:
            for p in self.patches:
                if not p.is_axis_aligned():
                    raise ValueError("2D frames require axis-aligned patches")
            rects = [p.rect for p in self.patches]
            for a, b in zip(rects, rects[1:]):
                if _overlap_1d(a[:2], b[:2]) <= 0 or _overlap_1d(a[2:], b[2:]) <= 0:
                    raise ValueError("consecutive patches must overlap with positive area")

    def workspace(self):
        if self._ws is None:
            from . import grid
            self._ws = grid.build_workspace(self)
        return self._ws

    @property
    def indices(self):
        return self.workspace().indices

    def __repr__(self):
        return (f"AggregatedFrame(dim={self.dim}, patches={len(self.patches)}, "
                f"J={self.max_level})")


def decode_translate_2d(translate: int, level: int):
    """Invert the 2D packing translate = kx * 2**level + ky."""
    return divmod(translate, 2 ** level)


def lift_scalar(patch, basis, level, translate, kind, x):
    """Scalar lifted frame element: |det|**(-1/2) * psi(kappa^-1(x)), 0 outside.

    On 2D patches the reference element is the level-normalized tensor hat
    2**level * hat(kx) x hat(ky) with the pair (kx, ky) packed into
    ``translate``.
    """
    scale = 1.0 / np.sqrt(patch.det)
    if patch.dim == 1:
        y = patch.to_ref(x)
        return scale * evaluate(basis, level, translate, kind, y)
    kx, ky = decode_translate_2d(translate, level)
    y = patch.to_ref(x)
    yx, yy = (y[0], y[1]) if np.ndim(y) == 1 else (y[..., 0], y[..., 1])
    amp = 2.0 ** level
    return (scale * amp
            * evaluate(basis, level, kx, kind, yx)
            * evaluate(basis, level, ky, kind, yy))


def lift_piola(patch, reference_field, x):
    """Piola-type lift of a vector field: grad(kappa) . psi(kappa^-1(x)) / |det|^(1/2).

    Preserves vanishing divergence under affine maps.  Raises if x lies
    outside the patch image.
    """
    if patch.dim != 2:
        raise ValueError("the Piola lifting is a 2D transform")
    y = patch.to_ref(np.asarray(x, dtype=float))
    if np.any(y < -1e-12) or np.any(y > 1 + 1e-12):
        raise ValueError("point outside patch")
    field = np.asarray(reference_field(y), dtype=float)
    return (patch.matrix @ field) / np.sqrt(patch.det)


def synthesize(frame, v: SparseVector, x):
    """Evaluate sum_l v_l * 2**(-s*level) * (lifted element) at x."""
    ws = frame.workspace()
    for idx in v:
        if idx not in ws.pos:
            raise ValueError(f"index outside the truncated set: {idx}")
    pts = np.atleast_2d(x) if frame.dim == 2 else np.atleast_1d(x)
    out = ws.synth_at(ws.to_dense(v), pts)
    if np.ndim(x) == 0 or (frame.dim == 2 and np.ndim(x) == 1):
        return float(out[0])
    return out


def analyze(frame, f) -> SparseVector:
    """Weighted analysis of f: (2**(-s*level) * <f, psi_l>)_l over the truncated set.

    ``f`` must accept numpy arrays (one argument in 1D, two in 2D).
    """
    ws = frame.workspace()
    return ws.from_dense(ws.analyze_dense(f))


def decompose(frame, u):
    """Patch-by-patch peel-off of u; returns one coefficient vector per patch.

    Projects u onto the first patch span, removes the projection, projects
    the remainder onto the next patch, and so on.  Projections are oracle
    Gram solves on the truncated patch spans, so reconstruction holds up to
    the truncation error.
    """
    from . import oracle
    ws = frame.workspace()
    residual = ws.grid_values(u)
    parts = []
    for p in range(len(frame.patches)):
        coeffs = oracle.patch_projection_coeffs(frame, p, residual)
        parts.append(ws.from_dense_patch(p, coeffs))
        residual = ws.subtract_patch_synth(p, coeffs, residual)
    return parts


def parse_frame_text(text: str) -> AggregatedFrame:
    """Parse a frame description: header 'levels J sobolev s', then patch lines."""
    levels = None
    sobolev = None
    patches = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "levels":
            if len(parts) != 4 or parts[2] != "sobolev":
                raise ValueError(f"line {ln}: header must read 'levels J sobolev s'")
            levels = int(parts[1])
            sobolev = float(parts[3])
        elif parts[0] == "patch":
            vals = [float(t) for t in parts[1:]]
            if len(vals) == 2:
                patches.append(Patch1D(vals[0], vals[1]))
            elif len(vals) == 6:
                patches.append(Patch2D((vals[0], vals[1]),
                                       ((vals[2], vals[3]), (vals[4], vals[5]))))
            else:
                raise ValueError(f"line {ln}: patch needs 2 (1D) or 6 (2D) numbers")
        else:
            raise ValueError(f"line {ln}: unknown directive {parts[0]!r}")
    if levels is None:
        raise ValueError("missing 'levels J sobolev s' header")
    if not patches:
        raise ValueError("no patches given")
    return AggregatedFrame(patches,
                           weights=PreconditionerWeights(sobolev),
                           max_level=levels)


def load_frame_file(path) -> AggregatedFrame:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_frame_text(fh.read())
