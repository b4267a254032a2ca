"""Simulated secure summation inside a buffer.

Values are stochastically quantized onto a signed grid, encoded modulo ``M``
and hidden by pairwise masks that cancel when all members of the buffer are
summed. The masks come from seed-derived streams, one per client pair and
round; there is no key agreement, secret sharing or dropout recovery.

Encoding: a grid integer ``z`` is stored as ``z mod M`` and decoded to the
representative in ``[-M/2, M/2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import RngStream, derive_stream
from .errors import ConfigError, DimensionError, IntegrityError

DEFAULT_MODULUS = 2**32
DEFAULT_CLIP = 10.0
DEFAULT_SCALE = 2 * DEFAULT_CLIP / 2**24
_MAX_MODULUS = 2**62


@dataclass(frozen=True)
class QuantSpec:
    scale: float = DEFAULT_SCALE
    modulus: int = DEFAULT_MODULUS
    clip_bound: float = DEFAULT_CLIP
    enabled: bool = True

    def __post_init__(self):
        if self.scale <= 0 or self.clip_bound <= 0:
            raise ConfigError("scale and clip_bound must be positive")
        if not 2 <= self.modulus <= _MAX_MODULUS:
            raise ConfigError(f"modulus must lie in [2, 2^62], got {self.modulus}")
        if 2 * self.clip_bound / self.scale >= self.modulus:
            raise ConfigError("2*clip_bound/scale must be below the modulus")

    @property
    def max_code(self) -> int:
        """Largest grid magnitude a single clipped value can round to."""
        return math.ceil(self.clip_bound / self.scale)

    def max_buffer(self) -> int:
        """Largest buffer whose sum decodes without wraparound."""
        return (self.modulus - 1) // (2 * self.max_code)


@dataclass(frozen=True, eq=False)
class FieldVector:
    elements: np.ndarray
    modulus: int

    def __post_init__(self):
        el = np.asarray(self.elements, dtype=np.int64).reshape(-1).copy()
        if el.size and (el.min() < 0 or el.max() >= self.modulus):
            raise ValueError("field elements must lie in [0, modulus)")
        el.setflags(write=False)
        object.__setattr__(self, "elements", el)

    def __len__(self) -> int:
        return int(self.elements.size)

    def __add__(self, other: "FieldVector") -> "FieldVector":
        _check_compatible([self, other])
        return FieldVector((self.elements + other.elements) % self.modulus, self.modulus)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FieldVector):
            return NotImplemented
        return self.modulus == other.modulus and np.array_equal(self.elements, other.elements)

    __hash__ = None


def _check_compatible(vs: Sequence[FieldVector]) -> None:
    if len({v.modulus for v in vs}) > 1:
        raise ValueError("field vectors have different moduli")
    if len({len(v) for v in vs}) > 1:
        raise DimensionError("field vectors have different lengths")


def stochastic_round(y: np.ndarray, rng: RngStream) -> np.ndarray:
    """Round up with probability equal to the fractional part."""
    lo = np.floor(y)
    up = rng.random(y.shape) < (y - lo)
    return (lo + up).astype(np.int64)


def encode(codes: np.ndarray, modulus: int) -> FieldVector:
    return FieldVector(np.mod(np.asarray(codes, dtype=np.int64), modulus), modulus)


def decode(v: FieldVector) -> np.ndarray:
    """Centered representative of every element, as signed integers."""
    el = v.elements
    half = v.modulus // 2
    return np.where(el >= v.modulus - half, el - v.modulus, el)


def quantize(values, q: QuantSpec, rng: RngStream) -> FieldVector:
    """Clip, scale to the grid, stochastically round and encode modulo ``M``."""
    x = np.clip(np.asarray(values, dtype=np.float64), -q.clip_bound, q.clip_bound)
    return encode(stochastic_round(x / q.scale, rng), q.modulus)


def pairwise_masks(
    buffer_members: Sequence[int],
    my_id: int,
    length: int,
    round: int,
    master_seed: int,
    modulus: int = DEFAULT_MODULUS,
) -> FieldVector:
    """Mask of ``my_id``: ``sum_{j>i} PRG(i,j) - sum_{j<i} PRG(j,i)`` modulo ``M``.

    Summed over all members of the buffer the masks are exactly zero.
    """
    members = sorted(buffer_members)
    if my_id not in members:
        raise ValueError(f"client {my_id} is not in buffer {members}")
    acc = np.zeros(length, dtype=np.int64)
    for j in members:
        if j == my_id:
            continue
        lo, hi = min(my_id, j), max(my_id, j)
        prg = derive_stream(master_seed, round, f"pair:{lo}:{hi}")
        r = prg.integers(0, modulus, size=length, dtype=np.int64)
        acc = (acc + r) % modulus if j > my_id else (acc - r) % modulus
    return FieldVector(acc, modulus)


def masked_sum(masked: Sequence[FieldVector]) -> FieldVector:
    """Element-wise sum modulo ``M`` of every submission in a buffer."""
    if not masked:
        raise ValueError("empty buffer")
    _check_compatible(masked)
    mod = masked[0].modulus
    acc = np.zeros(len(masked[0]), dtype=np.int64)
    for v in masked:
        acc = (acc + v.elements) % mod
    return FieldVector(acc, mod)


def dequantize_mean(total: FieldVector, s: int, q: QuantSpec) -> np.ndarray:
    """Decode a buffer sum of ``s`` quantized values and return their mean."""
    if s < 1:
        raise ValueError("buffer size must be >= 1")
    if s > q.max_buffer():
        # the sum may have wrapped without leaving the centered range
        raise IntegrityError(f"{s} members exceed the field headroom ({q.max_buffer()})")
    z = decode(total)
    if z.size and np.abs(z).max() > s * q.max_code:
        raise IntegrityError(
            f"decoded magnitude {int(np.abs(z).max())} exceeds {s} x {q.max_code}: wraparound"
        )
    return z.astype(np.float64) * q.scale / s
