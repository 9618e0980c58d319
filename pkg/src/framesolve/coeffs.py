"""Sparse coefficient vectors over frame indices.

A frame element is addressed by (patch, level, translate, kind); finitely
supported real coefficient sequences over these indices are the currency of
every algorithm in this package.  Vectors are canonical (no stored zeros),
immutable, and kept in index-sorted order so that all downstream arithmetic
is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

__all__ = [
    "Kind",
    "FrameIndex",
    "SparseVector",
    "SparsenessParams",
    "axpy",
    "best_n_term",
    "coarse",
    "weak_quasinorm",
    "write_vector",
    "read_vector",
]


class Kind(IntEnum):
    """Kind of a frame element; the integer value fixes the sort order."""

    SCALING = 0
    WAVELET = 1

    @property
    def label(self) -> str:
        return "scaling" if self is Kind.SCALING else "wavelet"

    @classmethod
    def from_label(cls, label: str) -> "Kind":
        try:
            return {"scaling": cls.SCALING, "wavelet": cls.WAVELET}[label]
        except KeyError:
            raise ValueError(f"unknown kind label {label!r}") from None


@dataclass(frozen=True, order=True)
class FrameIndex:
    """Address of one frame element: patch, dyadic level, translate, kind.

    Instances order lexicographically by (patch, level, translate, kind),
    which is the canonical enumeration order everywhere.
    """

    patch: int
    level: int
    translate: int
    kind: Kind

    def __post_init__(self):
        if self.patch < 0:
            raise ValueError("patch must be >= 0")


class SparseVector:
    """Finitely supported map FrameIndex -> float, zero-free and index-sorted."""

    __slots__ = ("_items", "_map")

    def __init__(self, entries=()):
        if isinstance(entries, SparseVector):
            data = dict(entries._map)
        elif isinstance(entries, dict):
            data = entries
        else:
            data = dict(entries)
        items = tuple(sorted((k, float(v)) for k, v in data.items() if v != 0.0))
        object.__setattr__(self, "_items", items)
        object.__setattr__(self, "_map", dict(items))

    def __setattr__(self, *a):
        raise AttributeError("SparseVector is immutable")

    def items(self):
        """Entries as (index, value) pairs in index order."""
        return self._items

    def indices(self):
        return tuple(k for k, _ in self._items)

    def values(self) -> np.ndarray:
        return np.array([v for _, v in self._items], dtype=float)

    def get(self, idx, default=0.0) -> float:
        return self._map.get(idx, default)

    def __getitem__(self, idx) -> float:
        return self._map.get(idx, 0.0)

    def __contains__(self, idx) -> bool:
        return idx in self._map

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(k for k, _ in self._items)

    def __eq__(self, other) -> bool:
        return isinstance(other, SparseVector) and self._items == other._items

    def __hash__(self):
        return hash(self._items)

    def __repr__(self):
        return f"SparseVector({len(self._items)} entries)"

    def norm(self) -> float:
        """l2 norm, accumulated in index order."""
        return math.sqrt(math.fsum(v * v for _, v in self._items))

    def scaled(self, factor: float) -> "SparseVector":
        return SparseVector({k: factor * v for k, v in self._items})


EMPTY = SparseVector()


@dataclass(frozen=True)
class SparsenessParams:
    """Decay exponent s and the matching Lorentz exponent tau = 1/(1/2 + s)."""

    s: float
    tau: float

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("s must be positive")
        if not 0 < self.tau < 2:
            raise ValueError("tau must lie in (0, 2)")
        expected = 1.0 / (0.5 + self.s)
        if abs(self.tau - expected) > 1e-12 * expected:
            raise ValueError("tau does not match 1/(1/2 + s) to 12 digits")

    @classmethod
    def from_s(cls, s: float) -> "SparsenessParams":
        return cls(s=s, tau=1.0 / (0.5 + s))


def axpy(alpha: float, x: SparseVector, y: SparseVector) -> SparseVector:
    """Return alpha*x + y in canonical form."""
    if alpha == 0.0 or len(x) == 0:
        return y if isinstance(y, SparseVector) else SparseVector(y)
    merged = dict(y.items())
    for idx, val in x.items():
        merged[idx] = merged.get(idx, 0.0) + alpha * val
    return SparseVector(merged)


def _magnitude_order(v: SparseVector):
    """Entries sorted by decreasing modulus, ties broken by smaller index."""
    return sorted(v.items(), key=lambda kv: (-abs(kv[1]), kv[0]))


def best_n_term(v: SparseVector, n: int) -> SparseVector:
    """Keep the n largest-modulus entries of v (smaller index wins ties)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n >= len(v):
        return v
    return SparseVector(_magnitude_order(v)[:n])


def coarse(epsilon: float, v: SparseVector) -> SparseVector:
    """Smallest-support magnitude-sorted prefix w of v with ||v - w|| <= epsilon."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if len(v) == 0:
        return v
    ordered = _magnitude_order(v)
    sq = np.array([val * val for _, val in ordered])
    # tails[m] = sum of squares of the entries dropped when keeping m of them
    tails = np.concatenate([np.cumsum(sq[::-1])[::-1], [0.0]])
    keep = int(np.argmax(tails <= epsilon * epsilon))
    if keep >= len(ordered):
        return v
    return SparseVector(ordered[:keep])


def weak_quasinorm(v: SparseVector, p: SparsenessParams) -> float:
    """sup_n n^(1/2+s) * (n-th largest modulus of v); 0 for the empty vector."""
    if len(v) == 0:
        return 0.0
    mods = np.sort(np.abs(v.values()))[::-1]
    n = np.arange(1, len(mods) + 1, dtype=float)
    return float(np.max(n ** (0.5 + p.s) * mods))


def write_vector(v: SparseVector) -> str:
    """Serialize as 'patch level translate kind value' lines in index order."""
    lines = [
        f"{idx.patch} {idx.level} {idx.translate} {idx.kind.label} {val!r}"
        for idx, val in v.items()
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def read_vector(text: str) -> SparseVector:
    """Parse the line format produced by :func:`write_vector`."""
    entries = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"line {ln}: expected 5 fields, got {len(parts)}")
        idx = FrameIndex(int(parts[0]), int(parts[1]), int(parts[2]),
                         Kind.from_label(parts[3]))
        entries[idx] = float(parts[4])
    return SparseVector(entries)
