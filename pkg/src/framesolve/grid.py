"""Quadrature grids and dense assembly shared across modules (internal).

Every frame element is piecewise (bi)linear with dyadic breakpoints, so a
composite 4-point Gauss-Legendre rule on the union of all breakpoints
integrates products of elements, their derivatives, and squares of frame
expansions exactly.  The workspace samples all elements once on that grid
and derives stiffness/Gram matrices, analysis contractions, and the column
decay tables used by the compressed apply from the samples.
"""

from __future__ import annotations

import numpy as np

from .coeffs import FrameIndex, Kind, SparseVector
from .wavelets import evaluate, gauss_cells, valid_translates

_MERGE_TOL = 1e-12


def _union_breakpoints(segments, max_level):
    """Union of the dyadic breakpoints of 1D intervals (start, length)."""
    pts = []
    step = 2.0 ** (-max_level)
    ks = np.arange(2 ** max_level + 1)
    for start, length in segments:
        pts.append(start + length * (ks * step))
    merged = np.unique(np.concatenate(pts))
    keep = [merged[0]]
    for x in merged[1:]:
        if x - keep[-1] > _MERGE_TOL:
            keep.append(x)
    return np.array(keep)


def _enumerate_1d(basis, max_level, patch_count):
    idxs = []
    j0 = basis.coarsest_level
    for p in range(patch_count):
        for k in valid_translates(basis, j0, Kind.SCALING):
            idxs.append(FrameIndex(p, j0, k, Kind.SCALING))
        for j in range(j0 + 1, max_level + 1):
            for k in valid_translates(basis, j, Kind.WAVELET):
                idxs.append(FrameIndex(p, j, k, Kind.WAVELET))
    idxs.sort()
    return tuple(idxs)


def _enumerate_2d(basis, max_level, patch_count):
    idxs = []
    j0 = basis.coarsest_level
    for p in range(patch_count):
        n0 = 2 ** j0
        for kx in range(1, n0):
            for ky in range(1, n0):
                idxs.append(FrameIndex(p, j0, kx * n0 + ky, Kind.SCALING))
        for j in range(j0 + 1, max_level + 1):
            n = 2 ** j
            for kx in range(1, n):
                for ky in range(1, n):
                    if kx % 2 == 1 or ky % 2 == 1:
                        idxs.append(FrameIndex(p, j, kx * n + ky, Kind.WAVELET))
    idxs.sort()
    return tuple(idxs)


def _hat_values(level, translate, y, derivative=0):
    """Peak-one hat (or slope) on the reference interval, vectorized, no checks."""
    h = 2.0 ** (-level)
    t = y / h - translate
    if derivative == 0:
        return np.maximum(0.0, 1.0 - np.abs(t))
    return np.where((t > -1.0) & (t < 0.0), 1.0 / h,
                    np.where((t > 0.0) & (t < 1.0), -1.0 / h, 0.0))


class _WorkspaceBase:
    """Caches keyed by operator coefficients, shared by both dimensions."""

    def _coef_key(self, diffusion, convection, reaction):
        return (float(diffusion), float(convection), float(reaction))

    def matrix(self, spec) -> np.ndarray:
        key = self._coef_key(spec.diffusion, spec.convection, spec.reaction)
        if key not in self._mat_cache:
            self._mat_cache[key] = self._assemble(*key)
        return self._mat_cache[key]

    def l2_gram(self) -> np.ndarray:
        if self._l2_gram is None:
            self._l2_gram = self._assemble(0.0, 0.0, 1.0)
        return self._l2_gram

    def h1_gram(self) -> np.ndarray:
        if self._h1_gram is None:
            self._h1_gram = self._assemble(1.0, 0.0, 1.0)
        return self._h1_gram

    def svd(self, spec):
        key = self._coef_key(spec.diffusion, spec.convection, spec.reaction)
        if key not in self._svd_cache:
            self._svd_cache[key] = np.linalg.svd(self.matrix(spec))
        return self._svd_cache[key]

    def tails(self, spec):
        """(col_tails, row_tails): l2 norms outside each level band, per column/row."""
        key = self._coef_key(spec.diffusion, spec.convection, spec.reaction)
        if key not in self._tail_cache:
            mat2 = self.matrix(spec) ** 2
            dist = np.abs(self.levels[:, None] - self.levels[None, :])
            bmax = int(dist.max()) if self.size > 1 else 0
            col = np.empty((self.size, bmax + 1))
            row = np.empty((self.size, bmax + 1))
            for b in range(bmax + 1):
                outside = dist > b
                col[:, b] = np.sqrt((mat2 * outside).sum(axis=0))
                row[:, b] = np.sqrt((mat2 * outside).sum(axis=1))
            self._tail_cache[key] = (col, row)
        return self._tail_cache[key]

    def rows_within(self, level, band):
        key = (level, band)
        if key not in self._rows_cache:
            sel = np.abs(self.levels - level) <= band
            self._rows_cache[key] = np.nonzero(sel)[0]
        return self._rows_cache[key]

    def level_blocks(self, spec):
        """Contiguous (row level, col level) sub-blocks of the matrix."""
        key = self._coef_key(spec.diffusion, spec.convection, spec.reaction)
        if key not in self._block_cache:
            mat = self.matrix(spec)
            blocks = {}
            for lr in self.level_values:
                rows = self.level_pos[lr]
                for lc in self.level_values:
                    blocks[(lr, lc)] = np.ascontiguousarray(
                        mat[np.ix_(rows, self.level_pos[lc])])
            self._block_cache[key] = blocks
        return self._block_cache[key]

    # -- sparse/dense conversions ------------------------------------------

    def to_dense(self, v: SparseVector) -> np.ndarray:
        out = np.zeros(self.size)
        for idx, val in v.items():
            out[self.pos[idx]] = val
        return out

    def from_dense(self, arr) -> SparseVector:
        return SparseVector({self.indices[i]: arr[i]
                             for i in np.nonzero(arr)[0]})

    def from_dense_patch(self, patch, arr) -> SparseVector:
        rows = self.patch_positions(patch)
        return SparseVector({self.indices[rows[i]]: arr[i]
                             for i in np.nonzero(arr)[0]})

    def patch_positions(self, patch) -> np.ndarray:
        return self._patch_pos[patch]

    def patch_gram(self, patch) -> np.ndarray:
        rows = self.patch_positions(patch)
        return self.l2_gram()[np.ix_(rows, rows)]

    def _init_caches(self):
        self._mat_cache = {}
        self._svd_cache = {}
        self._tail_cache = {}
        self._rows_cache = {}
        self._block_cache = {}
        self._l2_gram = None
        self._h1_gram = None
        self.pos = {idx: i for i, idx in enumerate(self.indices)}
        self.levels = np.array([idx.level for idx in self.indices])
        self.size = len(self.indices)
        self.level_values = sorted(set(self.levels.tolist()))
        self.level_pos = {lv: np.nonzero(self.levels == lv)[0]
                          for lv in self.level_values}
        patch_ids = np.array([idx.patch for idx in self.indices])
        self._patch_pos = [np.nonzero(patch_ids == p)[0]
                           for p in range(patch_ids.max() + 1)]


class Workspace1D(_WorkspaceBase):
    def __init__(self, frame):
        self.frame = frame
        basis = frame.reference
        self.indices = _enumerate_1d(basis, frame.max_level, len(frame.patches))
        self._init_caches()

        segs = [(p.start, p.length) for p in frame.patches]
        bp = _union_breakpoints(segs, frame.max_level)
        self.nodes, self.qweights = gauss_cells(bp)

        nq = len(self.nodes)
        vals = np.zeros((self.size, nq))
        dvals = np.zeros((self.size, nq))
        for i, idx in enumerate(self.indices):
            patch = frame.patches[idx.patch]
            y = patch.to_ref(self.nodes)
            alpha = frame.weights.weight(idx.level) / np.sqrt(patch.length)
            vals[i] = alpha * _hat_values(idx.level, idx.translate, y)
            dvals[i] = (alpha / patch.length) * _hat_values(
                idx.level, idx.translate, y, derivative=1)
        self.vals = vals
        self.dvals = dvals
        self._vq = vals * self.qweights
        self._dvq = dvals * self.qweights

    def _assemble(self, diffusion, convection, reaction):
        out = np.zeros((self.size, self.size))
        if diffusion:
            out += diffusion * (self._dvq @ self.dvals.T)
        if convection:
            # entry(row, col) integrates (d/dx col) * row
            out += convection * (self._vq @ self.dvals.T)
        if reaction:
            out += reaction * (self._vq @ self.vals.T)
        return out

    # -- function-side operations ------------------------------------------

    def grid_values(self, f) -> np.ndarray:
        return np.asarray(f(self.nodes), dtype=float) * np.ones_like(self.nodes)

    def l2_of_grid(self, g) -> float:
        return float(np.sqrt(self.qweights @ (g * g)))

    def analyze_dense(self, f) -> np.ndarray:
        return self._vq @ self.grid_values(f)

    def synth_grid(self, dense) -> np.ndarray:
        return self.vals.T @ dense

    def synth_at(self, dense, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        out = np.zeros(pts.shape)
        for i in np.nonzero(dense)[0]:
            idx = self.indices[i]
            patch = self.frame.patches[idx.patch]
            alpha = self.frame.weights.weight(idx.level) / np.sqrt(patch.length)
            y = patch.to_ref(pts)
            out += dense[i] * alpha * _hat_values(idx.level, idx.translate, y)
        return out

    def nonlinear_dense(self, dense) -> np.ndarray:
        """Exact coefficients of the squared expansion against the frame."""
        u = self.synth_grid(dense)
        return self._vq @ (u * u)

    def patch_load(self, patch, gridvals) -> np.ndarray:
        rows = self.patch_positions(patch)
        return self._vq[rows] @ gridvals

    def subtract_patch_synth(self, patch, coeffs, gridvals) -> np.ndarray:
        rows = self.patch_positions(patch)
        return gridvals - self.vals[rows].T @ coeffs


class Workspace2D(_WorkspaceBase):
    """Tensor-product workspace for axis-aligned 2D patch covers.

    All matrices factor through per-axis tables between the 1D hat factors
    of every patch, so assembly stays at 1D cost.
    """

    def __init__(self, frame):
        self.frame = frame
        basis = frame.reference
        J = frame.max_level
        self.indices = _enumerate_2d(basis, J, len(frame.patches))
        self._init_caches()

        # per-axis 1D factor pools: (patch, level, k) -> row
        self._fpos = {}
        factors = []
        for p in range(len(frame.patches)):
            for j in range(1, J + 1):
                for k in range(1, 2 ** j):
                    self._fpos[(p, j, k)] = len(factors)
                    factors.append((p, j, k))
        self._factors = factors
        nf = len(factors)

        rects = [p.rect for p in frame.patches]
        bx = _union_breakpoints([(r[0], r[1] - r[0]) for r in rects], J)
        by = _union_breakpoints([(r[2], r[3] - r[2]) for r in rects], J)
        self.nodes_x, self.qw_x = gauss_cells(bx)
        self.nodes_y, self.qw_y = gauss_cells(by)

        def factor_tables(nodes, axis):
            vals = np.zeros((nf, len(nodes)))
            dvals = np.zeros((nf, len(nodes)))
            for r, (p, j, k) in enumerate(factors):
                rect = rects[p]
                a, b = (rect[0], rect[1]) if axis == 0 else (rect[2], rect[3])
                length = b - a
                y = (nodes - a) / length
                vals[r] = _hat_values(j, k, y)
                dvals[r] = _hat_values(j, k, y, derivative=1) / length
            return vals, dvals

        hx, dhx = factor_tables(self.nodes_x, 0)
        hy, dhy = factor_tables(self.nodes_y, 1)
        self._hx, self._hy = hx, hy
        self._txq = hx * self.qw_x
        self._tyq = hy * self.qw_y
        self.i00x = self._txq @ hx.T
        self.i11x = (dhx * self.qw_x) @ dhx.T
        self.i00y = self._tyq @ hy.T
        self.i11y = (dhy * self.qw_y) @ dhy.T

        # per-index factor rows and scalar amplitudes
        xf = np.empty(self.size, dtype=int)
        yf = np.empty(self.size, dtype=int)
        alpha = np.empty(self.size)
        for i, idx in enumerate(self.indices):
            kx, ky = divmod(idx.translate, 2 ** idx.level)
            xf[i] = self._fpos[(idx.patch, idx.level, kx)]
            yf[i] = self._fpos[(idx.patch, idx.level, ky)]
            det = frame.patches[idx.patch].det
            alpha[i] = (frame.weights.weight(idx.level) * 2.0 ** idx.level
                        / np.sqrt(det))
        self._xf, self._yf, self._alpha = xf, yf, alpha

        inside = np.zeros((len(self.nodes_x), len(self.nodes_y)), dtype=bool)
        for r in rects:
            inside |= ((self.nodes_x[:, None] > r[0]) & (self.nodes_x[:, None] < r[1])
                       & (self.nodes_y[None, :] > r[2]) & (self.nodes_y[None, :] < r[3]))
        self._inside = inside

    def _assemble(self, diffusion, convection, reaction):
        if convection:
            raise ValueError("convection terms are not supported on 2D frames")
        xr, yr = self._xf, self._yf
        g00x = self.i00x[np.ix_(xr, xr)]
        g00y = self.i00y[np.ix_(yr, yr)]
        out = np.zeros((self.size, self.size))
        if diffusion:
            out += diffusion * (self.i11x[np.ix_(xr, xr)] * g00y
                                + g00x * self.i11y[np.ix_(yr, yr)])
        if reaction:
            out += reaction * (g00x * g00y)
        out *= self._alpha[:, None] * self._alpha[None, :]
        return out

    def grid_values(self, f) -> np.ndarray:
        return np.asarray(f(self.nodes_x[:, None], self.nodes_y[None, :]),
                          dtype=float) * np.ones((len(self.nodes_x), len(self.nodes_y)))

    def l2_of_grid(self, g) -> float:
        g2 = np.where(self._inside, g * g, 0.0)
        return float(np.sqrt(self.qw_x @ g2 @ self.qw_y))

    def analyze_dense(self, f) -> np.ndarray:
        table = self._txq @ self.grid_values(f) @ self._tyq.T
        return self._alpha * table[self._xf, self._yf]

    def synth_at(self, dense, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(len(pts))
        for i in np.nonzero(dense)[0]:
            idx = self.indices[i]
            rect = self.frame.patches[idx.patch].rect
            kx, ky = divmod(idx.translate, 2 ** idx.level)
            tx = (pts[:, 0] - rect[0]) / (rect[1] - rect[0])
            ty = (pts[:, 1] - rect[2]) / (rect[3] - rect[2])
            out += (dense[i] * self._alpha[i]
                    * _hat_values(idx.level, kx, tx)
                    * _hat_values(idx.level, ky, ty))
        return out

    def nonlinear_dense(self, dense):
        raise NotImplementedError("quadratic terms are built for 1D frames only")

    def patch_load(self, patch, gridvals) -> np.ndarray:
        rows = self.patch_positions(patch)
        table = self._txq @ gridvals @ self._tyq.T
        return self._alpha[rows] * table[self._xf[rows], self._yf[rows]]

    def subtract_patch_synth(self, patch, coeffs, gridvals) -> np.ndarray:
        rows = self.patch_positions(patch)
        weighted = coeffs * self._alpha[rows]
        contrib = np.einsum("i,iq,ir->qr", weighted,
                            self._hx[self._xf[rows]], self._hy[self._yf[rows]])
        return gridvals - contrib


def build_workspace(frame):
    if frame.dim == 1:
        return Workspace1D(frame)
    return Workspace2D(frame)
