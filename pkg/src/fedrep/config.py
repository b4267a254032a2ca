"""Experiment configuration and its TOML file format.

A config file is TOML with top-level scalars and one table per component::

    m = 8                  # clients
    byz_count = 2          # Byzantine clients (ids m-byz_count .. m-1)
    K = 8                  # sparsification budget, multiple of m
    alpha = 0.0            # obfuscation probability
    s = 2                  # buffer size, divides m
    rounds = 200
    master_seed = 1
    workers = 1            # threads for client-side phases

    [attack]       kind, coords, foe_eps, alie_z, same_target
    [aggregator]   kind, geomed_iters, tmean_fraction, cclip_radius, cclip_iters
    [local]        algo, eta, interval, beta, batch_size, lr_decay_round, lr_decay_factor
    [dataset]      kind, n_per_client, n_test, features, classes, noise, path, label_column, header
    [model]        kind, hidden, init, init_scale
    [quant]        enabled, scale, modulus, clip_bound

Instead of ``K`` a ``k_ratio`` (default 0.05) may be given; ``K`` is then
``k_ratio * d`` rounded to the nearest positive multiple of ``m``. An
optional ``d`` is checked against the model's parameter count. Any key not
listed here is an error.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .attacks import AttackSpec
from .client import LocalAlgoSpec
from .datasets import DatasetSpec
from .errors import (
    BufferSizeError,
    ByzantineFractionError,
    ConfigError,
    DimensionError,
    SparsityBudgetError,
    UnknownKeyError,
)
from .models import ModelSpec
from .robust_agg import AggregatorSpec
from .secure_agg import QuantSpec


DEFAULT_K_RATIO = 0.05


@dataclass(frozen=True)
class ExperimentConfig:
    m: int = 8
    byz_count: int = 0
    K: int | None = None
    k_ratio: float | None = None
    alpha: float = 0.0
    s: int = 2
    rounds: int = 100
    master_seed: int = 0
    workers: int = 1
    d: int | None = None
    attack: AttackSpec = field(default_factory=AttackSpec)
    aggregator: AggregatorSpec = field(default_factory=AggregatorSpec)
    local: LocalAlgoSpec = field(default_factory=LocalAlgoSpec)
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    quant: QuantSpec = field(default_factory=QuantSpec)

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if not 0 <= 2 * self.byz_count < self.m:
            raise ByzantineFractionError(
                f"byz_count={self.byz_count} must satisfy 0 <= byz_count/m < 1/2"
            )
        if self.s < 1 or self.m % self.s:
            raise BufferSizeError(f"buffer size s={self.s} must divide m={self.m}")
        if self.K is not None and self.k_ratio is not None:
            raise SparsityBudgetError("give at most one of K and k_ratio")
        if self.K is not None and (self.K < 1 or self.K % self.m):
            raise SparsityBudgetError(f"K={self.K} must be a positive multiple of m={self.m}")
        if self.k_ratio is not None and not 0 < self.k_ratio:
            raise SparsityBudgetError("k_ratio must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha={self.alpha} outside [0, 1]")
        if self.rounds < 0 or self.master_seed < 0 or self.workers < 1:
            raise ConfigError("rounds and master_seed must be >= 0 and workers >= 1")
        if self.quant.enabled and self.s > self.quant.max_buffer():
            raise ConfigError(f"buffer size {self.s} overflows the field (max {self.quant.max_buffer()})")
        if self.attack.coords == "coord_same" and not 0 <= self.attack.same_target < self.m - self.byz_count:
            raise ConfigError(f"coord_same target {self.attack.same_target} is not an honest client")

    @property
    def byzantine_ids(self) -> list[int]:
        return list(range(self.m - self.byz_count, self.m))

    @property
    def delta(self) -> float:
        return self.byz_count / self.m

    def budget(self, d: int) -> int:
        """Resolve ``K`` for a model of dimension ``d`` and check it fits."""
        if self.d is not None and self.d != d:
            raise DimensionError(f"config d={self.d} but the model has {d} parameters")
        if self.K is not None:
            K = self.K
        else:
            ratio = DEFAULT_K_RATIO if self.k_ratio is None else self.k_ratio
            K = max(self.m, self.m * round(ratio * d / self.m))
        if K > self.m * d:
            raise SparsityBudgetError(f"K={K} exceeds m*d={self.m * d}")
        return K

    def replace(self, **changes) -> "ExperimentConfig":
        """Copy with changes; setting one of ``K``/``k_ratio`` clears the other."""
        if "K" in changes:
            changes.setdefault("k_ratio", None)
        if "k_ratio" in changes:
            changes.setdefault("K", None)
        return dataclasses.replace(self, **changes)


_SECTIONS = {
    "attack": AttackSpec,
    "aggregator": AggregatorSpec,
    "local": LocalAlgoSpec,
    "dataset": DatasetSpec,
    "model": ModelSpec,
    "quant": QuantSpec,
}


def _build(cls, table: dict[str, Any], where: str):
    if not isinstance(table, dict):
        raise ConfigError(f"{where} must be a table")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(table) - known)
    if unknown:
        raise UnknownKeyError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    try:
        return cls(**table)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(raw: dict[str, Any]) -> ExperimentConfig:
    top = dict(raw)
    for name, cls in _SECTIONS.items():
        if name in top:
            top[name] = _build(cls, top[name], f"[{name}]")
    return _build(ExperimentConfig, top, "top level")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw)


def config_to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    """Plain-dict view, ``None`` fields dropped (TOML has no null)."""

    def strip(d):
        return {k: (strip(v) if isinstance(v, dict) else v) for k, v in d.items() if v is not None}

    return strip(dataclasses.asdict(cfg))
