"""Shared value types and the deterministic randomness contract.

Dense vectors are plain ``float64`` numpy arrays; :func:`as_dense` is the
validating constructor. Coordinate sets and sparse updates are small frozen
wrappers so that the wire form of an update cannot be built inconsistently.

Randomness
----------
Every random draw in the package comes from a stream returned by
:func:`derive_stream`. A stream is a :class:`numpy.random.Generator` backed by
the counter-based Philox bit generator, keyed by a
:class:`numpy.random.SeedSequence` built from ``(master_seed, round,
sha256(actor))``. Streams never depend on call order, so running clients in
parallel cannot change results.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError

RngStream = np.random.Generator


def derive_stream(master_seed: int, round: int, actor: str) -> RngStream:
    """Return the RNG stream owned by ``actor`` in round ``round``.

    ``actor`` is a free-form label such as ``"client:3"``, ``"server"`` or
    ``"pair:0:5"``. The same arguments always give a stream with the same
    draw sequence.
    """
    if master_seed < 0 or round < 0:
        raise ValueError("master_seed and round must be non-negative")
    digest = hashlib.sha256(actor.encode("utf-8")).digest()
    words = np.frombuffer(digest[:16], dtype="<u4").tolist()
    seq = np.random.SeedSequence([int(master_seed), int(round), *words])
    return np.random.Generator(np.random.Philox(seq))


def as_dense(values, d: int | None = None) -> np.ndarray:
    """Validate and copy ``values`` into a finite 1-D ``float64`` array."""
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionError(f"expected a non-empty 1-D vector, got shape {arr.shape}")
    if d is not None and arr.size != d:
        raise DimensionError(f"expected length {d}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector has non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class CoordinateSet:
    """Strictly increasing index set over ``[0, d)``."""

    indices: np.ndarray
    d: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1).copy()
        if idx.size and (idx[0] < 0 or idx[-1] >= self.d):
            raise DimensionError(f"coordinate out of range [0, {self.d})")
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            raise ValueError("coordinate indices must be strictly increasing")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @classmethod
    def _trusted(cls, indices, d: int) -> "CoordinateSet":
        """Skip validation; ``indices`` must already be sorted, unique and in range."""
        obj = object.__new__(cls)
        idx = np.asarray(indices, dtype=np.int64)
        idx.setflags(write=False)
        object.__setattr__(obj, "indices", idx)
        object.__setattr__(obj, "d", d)
        return obj

    @classmethod
    def from_iterable(cls, items: Iterable[int], d: int) -> "CoordinateSet":
        """Build a set from arbitrary (unsorted, possibly repeated) indices."""
        return cls(np.unique(np.fromiter(items, dtype=np.int64)), d)

    @classmethod
    def full(cls, d: int) -> "CoordinateSet":
        return cls(np.arange(d), d)

    @classmethod
    def empty(cls, d: int) -> "CoordinateSet":
        return cls(np.empty(0, dtype=np.int64), d)

    def __len__(self) -> int:
        return int(self.indices.size)

    def __iter__(self):
        return iter(self.indices.tolist())

    def __contains__(self, j) -> bool:
        pos = np.searchsorted(self.indices, j)
        return bool(pos < self.indices.size and self.indices[pos] == j)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CoordinateSet):
            return NotImplemented
        return self.d == other.d and np.array_equal(self.indices, other.indices)

    def __hash__(self) -> int:
        return hash((self.d, self.indices.tobytes()))

    def __repr__(self) -> str:
        return f"CoordinateSet({self.indices.tolist()}, d={self.d})"

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(self.indices.tolist())


@dataclass(frozen=True, eq=False)
class SparseUpdate:
    """Values aligned index-for-index with a :class:`CoordinateSet`."""

    coords: CoordinateSet
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64).reshape(-1)
        if vals.size != len(self.coords):
            raise DimensionError(
                f"{vals.size} values for {len(self.coords)} coordinates"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.coords)


def densify(u: SparseUpdate, d: int) -> np.ndarray:
    """Scatter a sparse update into a length-``d`` dense vector."""
    idx = u.coords.indices
    if idx.size and idx[-1] >= d:
        raise DimensionError(f"coordinate {int(idx[-1])} does not fit dimension {d}")
    out = np.zeros(d, dtype=np.float64)
    out[idx] = u.values
    return out


def partial_shuffle(picks: Sequence[int]) -> list[int]:
    """Run Fisher-Yates swaps ``i <-> picks[i]`` on a virtual ``arange``.

    ``picks[i]`` must lie in ``[i, n)``; only displaced slots are stored, so
    memory is O(len(picks)). Returns the first ``len(picks)`` slots.
    """
    swapped: dict[int, int] = {}
    out = []
    for i, j in enumerate(picks):
        vi = swapped.get(i, i)
        out.append(swapped.get(j, j))
        swapped[j] = vi
    return out


def sample_without_replacement(n: int, k: int, rng: RngStream) -> np.ndarray:
    """Draw ``k`` distinct integers uniformly from ``[0, n)``, in draw order."""
    if not 0 <= k <= n:
        raise ValueError(f"cannot draw {k} items from {n}")
    if k == 0:
        return np.empty(0, dtype=np.int64)
    picks = rng.integers(np.arange(k), n).tolist()
    return np.array(partial_shuffle(picks), dtype=np.int64)


def nth_not_in(positions: Sequence[int], excluded: Sequence[int]) -> list[int]:
    """Map ranks in the complement of ``excluded`` back to indices.

    ``excluded`` must be sorted ascending. Rank ``p`` maps to the ``p``-th
    smallest integer not in ``excluded``.
    """
    out = []
    for p in positions:
        for e in excluded:
            if e <= p:
                p += 1
            else:
                break
        out.append(int(p))
    return out
