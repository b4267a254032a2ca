"""Synthetic and CSV datasets, split into equal disjoint client shards."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import RngStream
from .errors import ConfigError

DATASET_KINDS = ("synthetic_gaussian_2class", "synthetic_quadratic", "csv_table")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "synthetic_gaussian_2class"
    n_per_client: int = 100
    n_test: int = 1000
    features: int = 20
    classes: int = 2
    noise: float = 0.0
    partition: str = "uniform"
    path: str = ""
    label_column: int = -1
    header: bool = True

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"unknown dataset kind {self.kind!r}")
        if self.partition != "uniform":
            raise ConfigError(f"unsupported partition {self.partition!r}")
        if self.kind != "csv_table" and (self.n_per_client < 1 or self.features < 1):
            raise ConfigError("n_per_client and features must be >= 1")
        if self.n_test < 1:
            raise ConfigError("n_test must be >= 1")
        if self.noise < 0:
            raise ConfigError("noise must be non-negative")
        if self.kind == "synthetic_gaussian_2class" and self.classes != 2:
            raise ConfigError("synthetic_gaussian_2class has exactly 2 classes")
        if self.kind == "csv_table" and not self.path:
            raise ConfigError("csv_table needs a path")


@dataclass(frozen=True, eq=False)
class Shard:
    X: np.ndarray
    y: np.ndarray
    ids: np.ndarray

    def __len__(self) -> int:
        return int(self.X.shape[0])

    @property
    def batch(self):
        return self.X, self.y


@dataclass(frozen=True, eq=False)
class FederatedData:
    shards: list[Shard]
    test: Shard
    features: int
    classes: int
    truth: np.ndarray | None = None


def _gaussian_2class(spec: DatasetSpec, n: int, rng: RngStream):
    truth = rng.normal(size=spec.features)
    truth /= np.linalg.norm(truth)
    X = rng.normal(size=(n, spec.features))
    score = X @ truth + spec.noise * rng.normal(size=n)
    return X, (score > 0).astype(np.float64), np.append(truth, 0.0)


def _quadratic(spec: DatasetSpec, n: int, rng: RngStream):
    center = rng.normal(size=spec.features)
    X = center + spec.noise * rng.normal(size=(n, spec.features))
    return X, np.zeros(n), center


def _csv(spec: DatasetSpec):
    path = Path(spec.path)
    if not path.is_file():
        raise ConfigError(f"dataset file not found: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if spec.header:
        rows = rows[1:]
    try:
        table = np.array([[float(c) for c in r] for r in rows if r], dtype=np.float64)
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric cell ({exc})") from exc
    if table.ndim != 2 or table.shape[1] < 2:
        raise ConfigError(f"{path}: need at least one feature column and a label column")
    y = table[:, spec.label_column]
    X = np.delete(table, spec.label_column % table.shape[1], axis=1)
    return X, y


def generate_dataset(spec: DatasetSpec, m: int, rng: RngStream) -> FederatedData:
    """Build ``m`` equal, disjoint, i.i.d. shards plus a held-out split."""
    if m < 1:
        raise ConfigError("need at least one client")
    truth = None
    if spec.kind == "csv_table":
        X, y = _csv(spec)
        n_train = X.shape[0] - spec.n_test
        n_per = min(spec.n_per_client, n_train // m) if spec.n_per_client else n_train // m
        if n_per < 1:
            raise ConfigError(f"{X.shape[0]} rows cannot fill {m} shards and {spec.n_test} test rows")
        classes = int(y.max()) + 1 if np.all(y == np.round(y)) and y.min() >= 0 else spec.classes
    else:
        n_per = spec.n_per_client
        total = n_per * m + spec.n_test
        make = _gaussian_2class if spec.kind == "synthetic_gaussian_2class" else _quadratic
        X, y, truth = make(spec, total, rng)
        classes = spec.classes
    order = rng.permutation(X.shape[0])
    shards = []
    for k in range(m):
        ids = np.sort(order[k * n_per : (k + 1) * n_per])
        shards.append(Shard(X[ids], y[ids], ids))
    test_ids = np.sort(order[m * n_per : m * n_per + spec.n_test])
    return FederatedData(shards, Shard(X[test_ids], y[test_ids], test_ids), X.shape[1], classes, truth)
