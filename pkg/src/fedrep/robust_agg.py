"""Robust aggregators and buffered aggregation.

Aggregators take a sequence of equal-length value arrays (the values of
updates on the agreed coordinate set) and return one array. The buffered
variant first averages clients in randomly assigned groups of ``s`` and then
aggregates the group means.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import RngStream, SparseUpdate
from .errors import AggregationError, BufferSizeError, DimensionError

_WEISZFELD_GUARD = 1e-12


@dataclass(frozen=True)
class AggregatorSpec:
    kind: str = "mean"
    geomed_iters: int = 5
    tmean_fraction: float = 7 / 16
    cclip_radius: float = 0.5
    cclip_iters: int = 5

    def __post_init__(self):
        if self.kind not in AGGREGATORS:
            raise AggregationError(f"unknown aggregator {self.kind!r}")
        if self.geomed_iters < 1 or self.cclip_iters < 1:
            raise AggregationError("iteration counts must be >= 1")
        if not 0.0 <= self.tmean_fraction < 0.5:
            raise AggregationError("tmean_fraction must lie in [0, 1/2)")
        if self.cclip_radius <= 0.0:
            raise AggregationError("cclip_radius must be positive")


def _stack(vs) -> np.ndarray:
    if len(vs) == 0:
        raise AggregationError("cannot aggregate an empty set of vectors")
    arr = np.array([np.asarray(v, dtype=np.float64) for v in vs])
    if arr.ndim != 2:
        raise DimensionError("aggregator inputs must be equal-length 1-D arrays")
    return arr


def sequential_mean(vs) -> np.ndarray:
    """Left-to-right sum divided by the count."""
    arr = _stack(vs)
    acc = arr[0].copy()
    for row in arr[1:]:
        acc = acc + row
    return acc / arr.shape[0]


def mean(vs) -> np.ndarray:
    return sequential_mean(vs)


def geomed(vs, iters: int = 5) -> np.ndarray:
    """Geometric median by Weiszfeld iterations started from the mean."""
    arr = _stack(vs)
    if iters < 1:
        raise AggregationError("iters must be >= 1")
    if arr.shape[0] == 1:
        return arr[0].copy()
    z = arr.mean(axis=0)
    for _ in range(iters):
        dist = np.linalg.norm(arr - z, axis=1)
        dist = np.where(dist < _WEISZFELD_GUARD, dist + _WEISZFELD_GUARD, dist)
        w = 1.0 / dist
        z = (w[:, None] * arr).sum(axis=0) / w.sum()
    return z


def tmean(vs, fraction: float = 7 / 16) -> np.ndarray:
    """Coordinate-wise mean after dropping ``floor(fraction*n)`` values per tail."""
    arr = _stack(vs)
    n = arr.shape[0]
    b = int(np.floor(fraction * n))
    if fraction < 0 or n - 2 * b < 1:
        raise AggregationError(f"trimming {b} per tail leaves nothing of {n} values")
    if b == 0:
        return sequential_mean(arr)
    srt = np.sort(arr, axis=0)
    return srt[b : n - b].mean(axis=0)


def cclip(vs, radius: float = 0.5, iters: int = 5, init=None) -> np.ndarray:
    """Centered clipping; starts from the coordinate-wise median by default."""
    arr = _stack(vs)
    if radius <= 0 or iters < 1:
        raise AggregationError("radius must be positive and iters >= 1")
    v = np.median(arr, axis=0) if init is None else np.array(init, dtype=np.float64)
    if v.shape != arr.shape[1:]:
        raise DimensionError("init has the wrong length")
    for _ in range(iters):
        diff = arr - v
        norms = np.linalg.norm(diff, axis=1)
        with np.errstate(divide="ignore"):
            scale = np.minimum(1.0, radius / norms)
        v = v + (diff * scale[:, None]).mean(axis=0)
    return v


AGGREGATORS: dict[str, Callable] = {
    "mean": mean,
    "geomed": geomed,
    "tmean": tmean,
    "cclip": cclip,
}


def aggregate(vs, spec: AggregatorSpec) -> np.ndarray:
    """Apply the aggregator described by ``spec``."""
    if spec.kind == "mean":
        return mean(vs)
    if spec.kind == "geomed":
        return geomed(vs, spec.geomed_iters)
    if spec.kind == "tmean":
        return tmean(vs, spec.tmean_fraction)
    return cclip(vs, spec.cclip_radius, spec.cclip_iters)


def buffer_assignment(m: int, s: int, rng: RngStream) -> tuple[np.ndarray, list[list[int]]]:
    """Draw a uniform permutation of clients and cut it into groups of ``s``.

    Returns the permutation and the member lists, each sorted by client id.
    """
    if s < 1 or m % s:
        raise BufferSizeError(f"buffer size {s} does not divide m={m}")
    perm = rng.permutation(m)
    buffers = [sorted(perm[l * s : (l + 1) * s].tolist()) for l in range(m // s)]
    return perm, buffers


def buffered_aggregate(
    updates: Sequence[SparseUpdate], s: int, spec: AggregatorSpec, rng: RngStream
) -> SparseUpdate:
    """Average clients within random buffers of size ``s``, then aggregate buffers.

    This is the plaintext path; the protocol replaces the in-buffer average
    with a secure sum but follows the same assignment.
    """
    if not updates:
        raise AggregationError("no updates to aggregate")
    coords = updates[0].coords
    if any(u.coords != coords for u in updates):
        raise DimensionError("updates are not on a common coordinate set")
    _, buffers = buffer_assignment(len(updates), s, rng)
    means = [sequential_mean([updates[k].values for k in members]) for members in buffers]
    return SparseUpdate(coords, aggregate(means, spec))


@dataclass
class RobustnessEstimate:
    """Outcome of :func:`certify_robustness`."""

    c: float
    worst_attack: str
    mean_sq_error: dict[str, float] = field(default_factory=dict)
    rho_sq: float = 0.0
    delta: float = 0.0


def certify_robustness(
    agg: AggregatorSpec,
    delta: float,
    trials: int,
    rng: RngStream,
    *,
    n: int = 16,
    dim: int = 4,
    sigma: float = 1.0,
    magnitudes: Sequence[float] = (1.0, 10.0, 1e3, 1e6),
) -> RobustnessEstimate:
    """Monte Carlo estimate of the constant ``c`` in ``E||e||^2 <= c*delta*rho^2``.

    Honest points are i.i.d. ``N(0, sigma^2 I)`` in ``dim`` dimensions, so
    ``rho^2 = 2*sigma^2*dim``. ``floor(delta*n)`` points are replaced by each
    scripted adversary in turn; the reported ``c`` is the worst mean squared
    error over adversaries divided by ``delta*rho^2``. A diagnostic only.
    """
    if not 0.0 <= delta < 0.5:
        raise ValueError(f"delta={delta} outside [0, 1/2)")
    f = int(np.floor(delta * n))
    rho_sq = 2.0 * sigma**2 * dim
    direction = np.ones(dim) / np.sqrt(dim)
    sums: dict[str, float] = {}
    for _ in range(trials):
        honest = rng.normal(0.0, sigma, size=(n - f, dim))
        mu = sequential_mean(honest)
        sd = honest.std(axis=0)
        attack_rows = {"none": np.empty((0, dim))}
        if f:
            attack_rows = {"negated_mean": np.tile(-mu, (f, 1))}
            attack_rows["mean_plus_std"] = np.tile(mu + sd, (f, 1))
            for mag in magnitudes:
                attack_rows[f"offset_{mag:g}"] = np.tile(mu + mag * direction, (f, 1))
        for name, rows in attack_rows.items():
            err = aggregate(np.vstack([honest, rows]), agg) - mu
            sums[name] = sums.get(name, 0.0) + float(err @ err)
    mse = {k: v / max(trials, 1) for k, v in sums.items()}
    worst = max(mse, key=mse.get)
    if f == 0:
        c = 0.0 if mse[worst] == 0.0 else float("inf")
    else:
        c = mse[worst] / ((f / n) * rho_sq)
    return RobustnessEstimate(c=c, worst_attack=worst, mean_sq_error=mse, rho_sq=rho_sq, delta=f / n)
