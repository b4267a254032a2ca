"""Consensus sparsification.

Each client proposes ``K/m`` coordinates: its top-``K/m`` magnitudes, of
which a Binomial(``K/m``, alpha) number are swapped for uniformly random
coordinates. The server broadcasts the union of all proposals and every
client sends its values on that union only.

Also hosts the closed-form quantities attached to the mechanism: the
differential-privacy level of the coordinate proposal, the contraction
constant of the resulting compressor, and the pairwise-dissimilarity
decomposition used as a test oracle.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    CoordinateSet,
    RngStream,
    SparseUpdate,
    nth_not_in,
    partial_shuffle,
)
from .errors import DimensionError, PrivacyParameterError, SparsityBudgetError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConSparParams:
    d: int
    K: int
    m: int
    alpha: float = 0.0

    def __post_init__(self):
        if self.m < 1 or self.K < 1 or self.K % self.m:
            raise SparsityBudgetError(f"K={self.K} must be a positive multiple of m={self.m}")
        if not 0 < self.K // self.m <= self.d:
            raise SparsityBudgetError(f"K/m={self.K // self.m} must lie in (0, d={self.d}]")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha={self.alpha} outside [0, 1]")

    @property
    def per_client(self) -> int:
        """Number of coordinates each client proposes (``K/m``)."""
        return self.K // self.m


def top_coords(v: np.ndarray, k: int) -> CoordinateSet:
    """Indices of the ``k`` largest ``|v_j|``; ties go to the lowest index."""
    v = np.asarray(v, dtype=np.float64)
    if not 0 < k <= v.size:
        raise ValueError(f"k={k} outside (0, {v.size}]")
    order = np.argsort(-np.abs(v), kind="stable")
    return CoordinateSet(np.sort(order[:k]), v.size)


def bottom_coords(v: np.ndarray, k: int) -> CoordinateSet:
    """Indices of the ``k`` smallest ``|v_j|``; ties go to the lowest index."""
    v = np.asarray(v, dtype=np.float64)
    if not 0 < k <= v.size:
        raise ValueError(f"k={k} outside (0, {v.size}]")
    order = np.argsort(np.abs(v), kind="stable")
    return CoordinateSet(np.sort(order[:k]), v.size)


def propose_coords(top: CoordinateSet, p: ConSparParams, rng: RngStream) -> CoordinateSet:
    """Obfuscate a top-``K/m`` set into the coordinate proposal sent to the server.

    Draws ``r ~ Binomial(K/m, alpha)`` as ``K/m`` Bernoulli trials, keeps
    ``K/m - r`` uniformly chosen members of ``top`` and adds ``r`` uniformly
    chosen indices from outside the kept set.
    """
    k = p.per_client
    if len(top) != k:
        raise DimensionError(f"top set has {len(top)} coordinates, expected K/m={k}")
    if top.d != p.d:
        raise DimensionError(f"top set dimension {top.d} != d={p.d}")
    r = int(np.count_nonzero(rng.random(k) < p.alpha))
    if r == 0:
        return top
    n_keep = k - r
    # one draw covers both partial shuffles: slots [i, k) for the kept part,
    # slots [i, d - n_keep) for the replacements
    lows = np.concatenate((np.arange(n_keep), np.arange(r)))
    highs = np.concatenate((np.full(n_keep, k), np.full(r, p.d - n_keep)))
    picks = rng.integers(lows, highs).tolist()
    top_list = top.indices.tolist()
    kept = sorted(top_list[i] for i in partial_shuffle(picks[:n_keep]))
    extra = nth_not_in(partial_shuffle(picks[n_keep:]), kept)
    return CoordinateSet._trusted(sorted(kept + extra), p.d)


def validate_proposal(proposal, p: ConSparParams) -> CoordinateSet | None:
    """Wire check for an untrusted proposal. Returns ``None`` if malformed.

    Only size and range are checked; a well-formed but adversarial set is
    accepted.
    """
    try:
        if isinstance(proposal, CoordinateSet):
            idx = proposal.indices
        else:
            idx = np.asarray(proposal, dtype=np.int64).reshape(-1)
        if idx.size != p.per_client:
            raise DimensionError(f"proposal has {idx.size} entries, expected {p.per_client}")
        if np.unique(idx).size != idx.size:
            raise DimensionError("proposal repeats a coordinate")
        return CoordinateSet(np.sort(idx), p.d)
    except (DimensionError, ValueError, TypeError) as exc:
        log.warning("rejected malformed coordinate proposal: %s", exc)
        return None


def union_coords(proposals: Sequence[CoordinateSet]) -> CoordinateSet:
    if not proposals:
        raise ValueError("union of no proposals")
    d = proposals[0].d
    if any(q.d != d for q in proposals):
        raise DimensionError("proposals disagree on the dimension")
    merged = np.unique(np.concatenate([q.indices for q in proposals]))
    return CoordinateSet(merged, d)


def extract(v: np.ndarray, coords: CoordinateSet) -> SparseUpdate:
    """Values of ``v`` on ``coords`` in ascending index order."""
    v = np.asarray(v, dtype=np.float64)
    if v.size != coords.d:
        raise DimensionError(f"vector length {v.size} != coordinate dimension {coords.d}")
    return SparseUpdate(coords, v[coords.indices])


def dp_epsilon(p: ConSparParams) -> float:
    """Privacy level of the coordinate proposal for adjacent top sets.

    The general bound ``ln((1+a)(K/m)(d-K/m+1)/(2a))`` holds for all
    ``a > 0``; for ``a >= 1/2`` the tighter of it and
    ``ln(1 + (1-a)/a * (2^(K/m)+1) * d^(K/m))`` is returned.
    """
    a = p.alpha
    if a <= 0.0:
        raise PrivacyParameterError("alpha = 0 leaks the top set: epsilon is infinite")
    k, d = p.per_client, p.d
    eps = math.log((1.0 + a) * k * (d - k + 1) / (2.0 * a))
    if a >= 0.5:
        eps = min(eps, math.log1p((1.0 - a) / a * (2.0**k + 1.0) * float(d) ** k))
    return eps


def contraction_constant(p: ConSparParams, delta: float) -> float:
    """Effective dimension ``d'`` of consensus sparsification as a compressor.

    ``E||x - C(x)||^2 <= (1 - d'/d) ||x||^2`` when at most a ``delta``
    fraction of clients is Byzantine.
    """
    if not 0.0 <= delta < 0.5:
        raise ValueError(f"delta={delta} outside [0, 1/2)")
    d, K, m = p.d, p.K, p.m
    decay = math.exp(-p.alpha * K * ((1.0 - delta) * m - 1.0) / (m * d))
    return d * (1.0 - decay) + (K / m) * decay


def dissimilarity_oracle(vk, vk2, membership_probs) -> float:
    """Expected squared distance of two sparsified vectors.

    ``membership_probs`` has shape ``(d, 3)``: per coordinate the
    probabilities that it is kept by both clients, by the first only, and by
    the second only. Vectors are treated as realized (not random).
    """
    vk = np.asarray(vk, dtype=np.float64)
    vk2 = np.asarray(vk2, dtype=np.float64)
    probs = np.asarray(membership_probs, dtype=np.float64)
    if probs.shape != (vk.size, 3) or vk.shape != vk2.shape:
        raise DimensionError("membership_probs must have shape (d, 3) matching the vectors")
    if np.any(probs < 0.0) or np.any(probs > 1.0):
        raise ValueError("membership probabilities must lie in [0, 1]")
    both, only_k, only_k2 = probs.T
    return float(
        np.sum((vk - vk2) ** 2 * both) + np.sum(vk**2 * only_k) + np.sum(vk2**2 * only_k2)
    )
