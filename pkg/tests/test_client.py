import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fedrep.client import (
    ClientState,
    LocalAlgoSpec,
    local_momentum_sgd,
    local_sgd,
    make_update,
    update_memory,
)
from fedrep.core import CoordinateSet, SparseUpdate, derive_stream
from fedrep.datasets import Shard
from fedrep.errors import ConfigError, DimensionError
from fedrep.models import Model, ModelSpec
from fedrep.sparsify import extract


def quad_shard(center):
    X = np.atleast_2d(np.asarray(center, dtype=float))
    return Shard(X, np.zeros(len(X)), np.arange(len(X)))


class ConstantGradient:
    """Loss-free stand-in whose gradient is always ``g``."""

    def __init__(self, g):
        self.g = np.asarray(g, dtype=float)

    def loss_and_grad(self, w, batch):
        return 0.0, self.g.copy()


QUAD = Model(ModelSpec(kind="quadratic"), features=1)


def test_single_full_batch_step():
    model = Model(ModelSpec(kind="quadratic"), features=3)
    shard = quad_shard([[1.0, 2.0, 3.0], [3.0, 2.0, 1.0]])
    w = np.array([0.5, -1.0, 4.0])
    _, g = model.loss_and_grad(w, shard.batch)
    out = local_sgd(w, shard, 0.3, 1, derive_stream(0, 0, "t"), model)
    assert np.array_equal(out, w - 0.3 * g)


def test_zero_step_size_keeps_w():
    w = np.array([2.0])
    assert np.array_equal(local_sgd(w, quad_shard([3.0]), 0.0, 4, derive_stream(0, 0, "t"), QUAD), w)


def test_quadratic_geometric_recursion():
    out = local_sgd(np.zeros(1), quad_shard([3.0]), 0.1, 5, derive_stream(0, 0, "t"), QUAD)
    assert out[0] == pytest.approx(3 * (1 - 0.9**5), rel=1e-14)


def test_empty_shard_raises():
    empty = Shard(np.zeros((0, 1)), np.zeros(0), np.zeros(0, dtype=int))
    with pytest.raises(ValueError):
        local_sgd(np.zeros(1), empty, 0.1, 1, derive_stream(0, 0, "t"), QUAD)


def test_momentum_with_zero_beta_is_sgd():
    model = Model(ModelSpec(kind="logistic_regression"), features=4)
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 4))
    shard = Shard(X, (X[:, 0] > 0).astype(float), np.arange(40))
    w = rng.normal(size=5)
    st_ = ClientState(0, shard, 5)
    a = local_sgd(w, shard, 0.2, 6, derive_stream(1, 0, "t"), model, batch_size=8)
    b = local_momentum_sgd(st_, w, 0.2, 6, 0.0, derive_stream(1, 0, "t"), model, batch_size=8)
    assert np.array_equal(a, b)


def test_momentum_first_step():
    g = np.array([1.0, -2.0])
    st_ = ClientState(0, quad_shard([[0.0, 0.0]]), 2)
    out = local_momentum_sgd(st_, np.zeros(2), 0.5, 1, 0.9, derive_stream(0, 0, "t"), ConstantGradient(g))
    assert np.allclose(out, -0.5 * 0.1 * g, atol=1e-15)


def test_momentum_converges_to_constant_gradient():
    g = np.array([0.3, 4.0])
    st_ = ClientState(0, quad_shard([[0.0, 0.0]]), 2)
    local_momentum_sgd(st_, np.zeros(2), 0.1, 200, 0.9, derive_stream(0, 0, "t"), ConstantGradient(g))
    # m_n = (1 - beta^n) g
    assert np.allclose(st_.momentum, (1 - 0.9**200) * g, rtol=1e-12)
    assert np.allclose(st_.momentum, g, rtol=1e-8)


def test_momentum_persists_across_rounds():
    g = np.array([1.0])
    model = ConstantGradient(g)
    st_ = ClientState(0, quad_shard([0.0]), 1)
    local_momentum_sgd(st_, np.zeros(1), 0.1, 1, 0.5, derive_stream(0, 0, "t"), model)
    local_momentum_sgd(st_, np.zeros(1), 0.1, 1, 0.5, derive_stream(0, 1, "t"), model)
    assert st_.momentum[0] == pytest.approx(0.75)


def test_state_starts_at_zero():
    st_ = ClientState(3, quad_shard([0.0, 0.0]), 7)
    assert np.array_equal(st_.memory, np.zeros(7))
    assert np.array_equal(st_.momentum, np.zeros(7))


def test_make_update_examples():
    st_ = ClientState(0, quad_shard([0.0]), 2)
    w_old, w_new = np.array([1.0, 2.0]), np.array([0.5, 3.0])
    assert np.array_equal(make_update(st_, w_old, w_new), w_old - w_new)
    st_.memory = np.array([1.0, 0.0])
    assert np.array_equal(make_update(st_, w_old, w_old), st_.memory)
    assert make_update(st_, w_old, w_new).tolist() == [1.5, -1.0]
    assert st_.memory.tolist() == [1.0, 0.0]
    with pytest.raises(DimensionError):
        make_update(st_, np.zeros(3), np.zeros(3))


def test_update_memory_examples():
    g = np.array([1.0, 2.0, 3.0])
    st_ = ClientState(0, quad_shard([0.0]), 3)
    update_memory(st_, g, extract(g, CoordinateSet.full(3)))
    assert st_.memory.tolist() == [0, 0, 0]
    update_memory(st_, g, extract(g, CoordinateSet.empty(3)))
    assert st_.memory.tolist() == [1, 2, 3]
    update_memory(st_, g, extract(g, CoordinateSet([1], 3)))
    assert st_.memory.tolist() == [1, 0, 3]
    with pytest.raises(DimensionError):
        update_memory(st_, np.zeros(4), extract(np.zeros(4), CoordinateSet([1], 4)))


@given(arrays(np.float64, 12, elements=st.floats(-1e6, 1e6)), st.sets(st.integers(0, 11)),
       arrays(np.float64, 12, elements=st.floats(-1e6, 1e6)))
def test_memory_vanishes_on_sent_coordinates(g, idx, attack):
    # even if the transmitted values differ from g, memory on I is exactly 0
    coords = CoordinateSet(sorted(idx), 12)
    st_ = ClientState(0, quad_shard([0.0]), 12)
    update_memory(st_, g, SparseUpdate(coords, attack[coords.indices]))
    assert np.all(st_.memory[coords.indices] == 0)
    off = np.setdiff1d(np.arange(12), coords.indices)
    assert np.array_equal(st_.memory[off], g[off])


def test_local_spec_validation_and_schedule():
    with pytest.raises(ConfigError):
        LocalAlgoSpec(algo="adam")
    with pytest.raises(ConfigError):
        LocalAlgoSpec(beta=1.0)
    spec = LocalAlgoSpec(eta=0.5, lr_decay_round=10)
    assert spec.eta_at(9) == 0.5
    assert spec.eta_at(10) == pytest.approx(0.05)
