"""Byzantine behaviours for update values and for coordinate proposals.

Value attacks act on arrays already restricted to the agreed coordinate set.
Omniscient attacks (ALIE, FoE) read every honest array of the round.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist
from typing import Sequence

import numpy as np

from .core import CoordinateSet, RngStream, sample_without_replacement
from .errors import ConfigError
from .sparsify import ConSparParams, bottom_coords

VALUE_ATTACKS = ("none", "bit_flip", "alie", "foe")
COORD_ATTACKS = ("honest", "coord_min", "coord_rand", "coord_same")


@dataclass(frozen=True)
class AttackSpec:
    kind: str = "none"
    coords: str = "honest"
    foe_eps: float = 0.5
    alie_z: float | None = None
    same_target: int = 0

    def __post_init__(self):
        if self.kind not in VALUE_ATTACKS:
            raise ConfigError(f"unknown value attack {self.kind!r}")
        if self.coords not in COORD_ATTACKS:
            raise ConfigError(f"unknown coordinate attack {self.coords!r}")
        if self.foe_eps < 0:
            raise ConfigError("foe_eps must be non-negative")


def bit_flip(g) -> np.ndarray:
    return -np.asarray(g, dtype=np.float64)


def alie_z(n: int, f: int) -> float:
    """Quantile rule ``z = Phi^-1(1 - s/(n-f))`` with ``s = floor(n/2 + 1) - f``."""
    if not 0 <= 2 * f < n:
        raise ValueError(f"ALIE needs f < n/2 (n={n}, f={f})")
    s = (n // 2 + 1) - f
    return NormalDist().inv_cdf(1.0 - s / (n - f))


def alie(honest_updates: Sequence, n: int, f: int, z_override: float | None = None) -> np.ndarray:
    """Honest mean shifted by ``z`` honest standard deviations, per coordinate."""
    if len(honest_updates) == 0:
        raise ValueError("ALIE needs at least one honest update")
    if not 0 <= 2 * f < n:
        raise ValueError(f"ALIE needs f < n/2 (n={n}, f={f})")
    arr = np.asarray(honest_updates, dtype=np.float64)
    z = alie_z(n, f) if z_override is None else z_override
    return arr.mean(axis=0) + z * arr.std(axis=0)


def foe(honest_updates: Sequence, eps: float) -> np.ndarray:
    if len(honest_updates) == 0:
        raise ValueError("FoE needs at least one honest update")
    return -eps * np.asarray(honest_updates, dtype=np.float64).mean(axis=0)


def attack_values(spec: AttackSpec, own, honest_updates: Sequence, n: int, f: int) -> np.ndarray:
    """Value array a Byzantine client submits on the agreed coordinates."""
    if spec.kind == "bit_flip":
        return bit_flip(own)
    if spec.kind == "alie":
        return alie(honest_updates, n, f, spec.alie_z)
    if spec.kind == "foe":
        return foe(honest_updates, spec.foe_eps)
    return np.array(own, dtype=np.float64)


def attack_coords(
    kind: str,
    g_self,
    p: ConSparParams,
    honest_proposals: dict[int, CoordinateSet],
    rng: RngStream,
    target: int = 0,
) -> CoordinateSet:
    """Coordinate proposal of a Byzantine client; always ``K/m`` indices."""
    k = p.per_client
    if kind == "coord_min":
        return bottom_coords(g_self, k)
    if kind == "coord_rand":
        return CoordinateSet(np.sort(sample_without_replacement(p.d, k, rng)), p.d)
    if kind == "coord_same":
        if target not in honest_proposals:
            raise ValueError(f"coord_same target {target} is not an honest client")
        return honest_proposals[target]
    raise ValueError(f"{kind!r} is not a coordinate attack")
