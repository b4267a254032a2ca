"""Small models with exact gradients for desk-scale training.

All parameters live in one flat ``float64`` vector ``w``. A batch is a pair
``(X, y)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RngStream
from .errors import ConfigError, DimensionError

MODEL_KINDS = ("linear_regression", "logistic_regression", "mlp_1hidden", "quadratic")


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "logistic_regression"
    hidden: int = 16
    init: str = "zeros"
    init_scale: float = 0.1

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.init not in ("zeros", "normal"):
            raise ConfigError(f"unknown init scheme {self.init!r}")
        if self.hidden < 1:
            raise ConfigError("hidden width must be >= 1")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class Model:
    """Loss, gradient and prediction for one :class:`ModelSpec`.

    ``features`` is the input width; ``classes`` only matters for the MLP,
    whose output layer has one logit per class.
    """

    def __init__(self, spec: ModelSpec, features: int, classes: int = 2):
        self.spec = spec
        self.features = features
        self.classes = classes
        p, h, c = features, spec.hidden, classes
        if spec.kind == "mlp_1hidden":
            self.dim = p * h + h + h * c + c
        elif spec.kind == "quadratic":
            self.dim = p
        else:
            self.dim = p + 1

    def init_params(self, rng: RngStream) -> np.ndarray:
        if self.spec.init == "zeros" and self.spec.kind != "mlp_1hidden":
            return np.zeros(self.dim)
        # a zero-initialized MLP has symmetric hidden units and never breaks symmetry
        return rng.normal(0.0, self.spec.init_scale, size=self.dim)

    def _unpack_mlp(self, w):
        p, h, c = self.features, self.spec.hidden, self.classes
        i = 0
        W1 = w[i : i + p * h].reshape(p, h)
        i += p * h
        b1 = w[i : i + h]
        i += h
        W2 = w[i : i + h * c].reshape(h, c)
        i += h * c
        b2 = w[i : i + c]
        return W1, b1, W2, b2

    def _check(self, w, X):
        if w.shape != (self.dim,):
            raise DimensionError(f"parameter length {w.shape} != {self.dim}")
        if X.ndim != 2 or X.shape[1] != self.features or X.shape[0] == 0:
            raise DimensionError(f"batch shape {X.shape} does not match {self.features} features")

    def loss_and_grad(self, w, batch) -> tuple[float, np.ndarray]:
        """Mean loss over the batch and its exact gradient with respect to ``w``."""
        X, y = batch
        w = np.asarray(w, dtype=np.float64)
        X = np.asarray(X, dtype=np.float64)
        self._check(w, X)
        n = X.shape[0]
        kind = self.spec.kind
        if kind == "quadratic":
            diff = w[None, :] - X
            return 0.5 * float(np.mean(np.sum(diff**2, axis=1))), diff.mean(axis=0)
        if kind == "linear_regression":
            r = X @ w[:-1] + w[-1] - y
            g = np.empty_like(w)
            g[:-1] = X.T @ r / n
            g[-1] = r.mean()
            return 0.5 * float(np.mean(r**2)), g
        if kind == "logistic_regression":
            z = X @ w[:-1] + w[-1]
            loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
            r = _sigmoid(z) - y
            g = np.empty_like(w)
            g[:-1] = X.T @ r / n
            g[-1] = r.mean()
            return loss, g
        W1, b1, W2, b2 = self._unpack_mlp(w)
        a = np.tanh(X @ W1 + b1)
        logits = a @ W2 + b2
        logits = logits - logits.max(axis=1, keepdims=True)
        logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
        yi = np.asarray(y, dtype=np.int64)
        loss = -float(np.mean(logp[np.arange(n), yi]))
        dlogits = np.exp(logp)
        dlogits[np.arange(n), yi] -= 1.0
        dlogits /= n
        dW2 = a.T @ dlogits
        db2 = dlogits.sum(axis=0)
        da = dlogits @ W2.T * (1.0 - a**2)
        dW1 = X.T @ da
        db1 = da.sum(axis=0)
        return loss, np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2])

    def accuracy(self, w, batch) -> float | None:
        """Top-1 accuracy; ``None`` for regression-type models."""
        X, y = batch
        kind = self.spec.kind
        if kind == "logistic_regression":
            z = X @ w[:-1] + w[-1]
            return float(np.mean((z > 0) == (y > 0.5)))
        if kind == "mlp_1hidden":
            W1, b1, W2, b2 = self._unpack_mlp(w)
            pred = np.argmax(np.tanh(X @ W1 + b1) @ W2 + b2, axis=1)
            return float(np.mean(pred == y))
        return None
