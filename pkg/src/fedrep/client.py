"""Honest client: local training, error-compensated update, memory refresh."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import RngStream, SparseUpdate, densify
from .datasets import Shard
from .errors import ConfigError, DimensionError
from .models import Model


@dataclass(frozen=True)
class LocalAlgoSpec:
    algo: str = "momentum_sgd"
    eta: float = 0.1
    interval: int = 1
    beta: float = 0.9
    batch_size: int = 25
    lr_decay_round: int | None = None
    lr_decay_factor: float = 0.1

    def __post_init__(self):
        if self.algo not in ("sgd", "momentum_sgd"):
            raise ConfigError(f"unknown local algorithm {self.algo!r}")
        if self.eta < 0 or self.interval < 1:
            raise ConfigError("eta must be >= 0 and interval >= 1")
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError("beta must lie in [0, 1)")
        if self.batch_size < 0:
            raise ConfigError("batch_size must be >= 0 (0 = full batch)")

    def eta_at(self, t: int) -> float:
        """Learning rate of round ``t`` under the optional step decay."""
        if self.lr_decay_round is not None and t >= self.lr_decay_round:
            return self.eta * self.lr_decay_factor
        return self.eta


@dataclass
class ClientState:
    """Per-client persistent state. ``memory`` and ``momentum`` start at zero."""

    client_id: int
    shard: Shard
    d: int
    memory: np.ndarray = field(default=None)
    momentum: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.memory is None:
            self.memory = np.zeros(self.d)
        if self.momentum is None:
            self.momentum = np.zeros(self.d)


def _minibatch(shard: Shard, batch_size: int | None, rng: RngStream):
    n = len(shard)
    if n == 0:
        raise ValueError("empty shard")
    if not batch_size or batch_size >= n:
        return shard.X, shard.y
    idx = rng.choice(n, size=batch_size, replace=False)
    return shard.X[idx], shard.y[idx]


def local_sgd(
    w, shard: Shard, eta: float, I: int, rng: RngStream, model: Model, batch_size: int | None = None
) -> np.ndarray:
    """``I`` plain SGD steps from ``w``; ``batch_size`` of ``None`` or 0 means full batch."""
    w = np.array(w, dtype=np.float64)
    for _ in range(I):
        _, g = model.loss_and_grad(w, _minibatch(shard, batch_size, rng))
        w = w - eta * g
    return w


def local_momentum_sgd(
    state: ClientState,
    w,
    eta: float,
    I: int,
    beta: float,
    rng: RngStream,
    model: Model,
    batch_size: int | None = None,
) -> np.ndarray:
    """``I`` steps of ``m <- beta*m + (1-beta)*grad; w <- w - eta*m``.

    The momentum buffer carries over between rounds through ``state``.
    """
    w = np.array(w, dtype=np.float64)
    m = state.momentum
    for _ in range(I):
        _, g = model.loss_and_grad(w, _minibatch(state.shard, batch_size, rng))
        m = beta * m + (1.0 - beta) * g
        w = w - eta * m
    state.momentum = m
    return w


def make_update(state: ClientState, w_old, w_new) -> np.ndarray:
    """``memory + (w_old - w_new)``; leaves ``state`` untouched."""
    w_old = np.asarray(w_old, dtype=np.float64)
    w_new = np.asarray(w_new, dtype=np.float64)
    if not (w_old.shape == w_new.shape == state.memory.shape):
        raise DimensionError("parameter and memory lengths differ")
    return state.memory + (w_old - w_new)


def update_memory(state: ClientState, g, g_sparse: SparseUpdate) -> None:
    """Keep the part of ``g`` that was not transmitted."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape != state.memory.shape or g_sparse.coords.d != g.size:
        raise DimensionError("update and memory lengths differ")
    residual = g - densify(g_sparse, g.size)
    residual[g_sparse.coords.indices] = 0.0
    state.memory = residual
