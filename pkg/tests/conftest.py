"""Shared fixtures: frames, operator data, and independent test oracles."""

import math

import numpy as np
import pytest

from framesolve import OperatorSpec, estimate_spectrum
from framesolve.frame import AggregatedFrame, Patch1D, Patch2D
from framesolve.wavelets import ReferenceBasis

# default two-patch interval cover: equal thirds-overlap patches whose dyadic
# grids share the overlap lattice, so the aggregate system has a genuine kernel
PATCHES_1D = (Patch1D(0.0, 2.0 / 3.0), Patch1D(1.0 / 3.0, 2.0 / 3.0))


def two_patch_frame(max_level):
    return AggregatedFrame(list(PATCHES_1D), max_level=max_level)


def single_patch_frame(max_level, coarsest=1):
    return AggregatedFrame([Patch1D(0.0, 1.0)],
                           reference=ReferenceBasis(coarsest_level=coarsest),
                           max_level=max_level)


def lshape_frame(max_level):
    return AggregatedFrame(
        [Patch2D((0.0, 0.0), ((1.0, 0.0), (0.0, 0.5))),
         Patch2D((0.0, 0.0), ((0.5, 0.0), (0.0, 1.0)))],
        max_level=max_level)


@pytest.fixture(scope="session")
def frame_j4():
    return two_patch_frame(4)


@pytest.fixture(scope="session")
def frame_j5():
    return two_patch_frame(5)


@pytest.fixture(scope="session")
def frame_j6():
    return two_patch_frame(6)


@pytest.fixture(scope="session")
def frame_j7():
    return two_patch_frame(7)


@pytest.fixture(scope="session")
def single_j4():
    return single_patch_frame(4)


@pytest.fixture(scope="session")
def lshape_j3():
    return lshape_frame(3)


@pytest.fixture(scope="session")
def laplace():
    return OperatorSpec(diffusion=1.0)


@pytest.fixture(scope="session")
def convdiff():
    return OperatorSpec(diffusion=1.0, convection=1.0, reaction=1.0)


@pytest.fixture(scope="session")
def spectrum_j5(frame_j5, laplace):
    return estimate_spectrum(frame_j5, laplace)


@pytest.fixture(scope="session")
def spectrum_j6(frame_j6, laplace):
    return estimate_spectrum(frame_j6, laplace)


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------

def coarse_oracle(epsilon, v):
    """Brute-force prefix scan of the magnitude-sorted entry list."""
    ordered = sorted(v.items(), key=lambda kv: (-abs(kv[1]), kv[0]))
    for m in range(len(ordered) + 1):
        tail = math.sqrt(math.fsum(val * val for _, val in ordered[m:]))
        if tail <= epsilon:
            return dict(ordered[:m])
    raise AssertionError("unreachable")


def tail_quasinorm(v, s):
    """sup_{N>=0} (N+1)^s * (l2 tail after the best N-term truncation).

    Standard shifted form of the best-approximation seminorm; the unshifted
    N^s form degenerates on singletons.
    """
    mods = np.sort(np.abs(np.array([val for _, val in v.items()])))[::-1]
    if len(mods) == 0:
        return 0.0
    tails = np.sqrt(np.maximum(np.cumsum((mods ** 2)[::-1])[::-1], 0.0))
    n = np.arange(len(mods), dtype=float)
    return float(np.max((n + 1.0) ** s * tails))


def random_sparse(rng, frame_or_size, max_entries, scale=1.0):
    """Seeded random vector over synthetic indices or a frame's index set."""
    from framesolve import FrameIndex, Kind, SparseVector
    if isinstance(frame_or_size, int):
        n = rng.integers(0, max_entries + 1)
        translates = rng.choice(10 * max_entries, size=n, replace=False)
        return SparseVector({
            FrameIndex(0, 1, int(t), Kind.WAVELET):
                scale * float(rng.standard_normal() * 10.0 ** rng.uniform(-3, 1))
            for t in translates})
    ws = frame_or_size.workspace()
    n = int(rng.integers(1, min(max_entries, ws.size) + 1))
    picks = rng.choice(ws.size, size=n, replace=False)
    dense = np.zeros(ws.size)
    dense[picks] = scale * rng.standard_normal(n)
    return ws.from_dense(dense)


def bump_curl_field():
    """Divergence-free reference field: curl of a C^inf bump on (0,1)^2.

    The bump exp(-1/(1/4 - r^2)) has the analytic gradient
    grad = exp(-1/q) * (-2*(x-c)) / q^2 with q = 1/4 - r^2, so the rotated
    gradient (dg/dy, -dg/dx) is exactly divergence-free.
    """

    def field(y):
        y = np.asarray(y, dtype=float)
        xt = y[..., 0] - 0.5
        yt = y[..., 1] - 0.5
        q = 0.25 - (xt * xt + yt * yt)
        safe = q > 1e-9
        amp = np.zeros_like(q)
        amp[safe] = np.exp(-1.0 / q[safe]) / q[safe] ** 2
        return np.stack([-2.0 * yt * amp, 2.0 * xt * amp], axis=-1)

    return field
