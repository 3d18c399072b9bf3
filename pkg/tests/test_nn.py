import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scnp import nn
from scnp.errors import EmptyMask, ShapeMismatch, StaleCache
from scnp.nn import AdamState, MlpParams, TrainConfig

from conftest import fixed_params, six_node_dataset
from oracles import max_rel_error, numeric_grads

EVAL = TrainConfig(dropout_rate=0.5)


def test_zero_weights_give_zero_output():
    p = MlpParams(np.zeros((4, 3)), np.zeros(3), np.zeros((3, 2)), np.zeros(2))
    h, _ = nn.mlp_forward(np.random.default_rng(0).random((5, 4)), p, EVAL)
    assert np.array_equal(h, np.zeros((5, 2)))


def test_hand_checked_forward():
    # X = I, W0 = [[1, -1, 0], [0, 2, 1]], so pre = W0 + b0
    p = MlpParams(np.array([[1.0, -1, 0], [0, 2, 1]]), np.array([0.5, 0, 0]), np.array([[1.0, 0], [0, 1], [1, 1]]), np.array([0.0, 1]))
    h, cache = nn.mlp_forward(np.eye(2), p, EVAL)
    # relu rows: [1.5, 0, 0] and [0.5, 2, 1]
    np.testing.assert_array_equal(cache.hidden, [[1.5, 0, 0], [0.5, 2, 1]])
    np.testing.assert_array_equal(h, [[1.5, 1.0], [1.5, 4.0]])


def test_training_forward_deterministic():
    x = np.random.default_rng(0).random((6, 4))
    p = fixed_params()
    a, _ = nn.mlp_forward(x, p, EVAL, True, np.random.default_rng(5))
    b, _ = nn.mlp_forward(x, p, EVAL, True, np.random.default_rng(5))
    assert np.array_equal(a, b)


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        nn.mlp_forward(np.ones((3, 7)), fixed_params(), EVAL)


def test_dropout_expectation_elementwise():
    x = np.linspace(0.1, 1.0, 20)
    rng = np.random.default_rng(0)
    mean = np.mean([nn.dropout(x, 0.5, rng)[0] for _ in range(20000)], axis=0)
    np.testing.assert_allclose(mean, x, rtol=0.05)


def test_sparse_dropout_hits_stored_entries_only():
    x = sp.csr_matrix(np.array([[1.0, 0, 2], [0, 3, 0]]))
    out, scale = nn.dropout(x, 0.5, np.random.default_rng(0))
    assert out.nnz == 3 and set(np.unique(scale)) <= {0.0, 2.0}


def test_inverted_dropout_mlp_expectation():
    # nonnegative inputs, weights and bias keep relu in its linear region
    rng = np.random.default_rng(3)
    x = rng.random((4, 3))
    p = MlpParams(rng.random((3, 5)), np.full(5, 0.1), rng.random((5, 2)), np.zeros(2))
    eval_out, _ = nn.mlp_forward(x, p, EVAL)
    draws = np.random.default_rng(11)
    total = np.zeros_like(eval_out)
    runs = 10000
    for _ in range(runs):
        total += nn.mlp_forward(x, p, EVAL, True, draws)[0]
    rel = np.abs(total / runs - eval_out) / np.abs(eval_out)
    assert rel.max() < 0.02


def test_softmax_examples():
    np.testing.assert_allclose(nn.softmax_rows([[0.0, 0.0]]), [[0.5, 0.5]])
    big = nn.softmax_rows([[1000.0, 0.0]])
    assert np.all(np.isfinite(big)) and big[0, 0] == 1.0 and big[0, 1] < 1e-300
    np.testing.assert_allclose(nn.softmax_rows([[math.log(1), math.log(3)]]), [[0.25, 0.75]], atol=1e-15)


rows = arrays(np.float64, (3, 4), elements=st.floats(-50, 50))


@settings(max_examples=100, deadline=None)
@given(rows, st.floats(-100, 100))
def test_softmax_normalized_and_shift_invariant(m, c):
    s = nn.softmax_rows(m)
    assert np.all(s >= 0)
    np.testing.assert_allclose(s.sum(axis=1), 1.0, rtol=0, atol=1e-12)
    np.testing.assert_allclose(nn.softmax_rows(m + c), s, rtol=0, atol=1e-12)


def test_cross_entropy_examples():
    onehot = np.eye(3)
    labels = np.arange(3)
    assert nn.masked_cross_entropy(onehot, labels, [0, 1, 2]) == 0.0
    uniform = np.full((4, 3), 1 / 3)
    assert nn.masked_cross_entropy(uniform, np.zeros(4, int), [0, 2]) == pytest.approx(math.log(3))
    p = MlpParams(np.ones((2, 2)), np.zeros(2), np.ones((2, 2)), np.zeros(2))
    got = nn.masked_cross_entropy(np.full((2, 2), 0.5), np.array([0, 1]), [0, 1], p, 0.005)
    assert got == pytest.approx(math.log(2) + 0.02, abs=1e-15)


def test_cross_entropy_clamped_and_mask():
    probs = np.array([[1.0, 0.0]])
    assert nn.masked_cross_entropy(probs, np.array([1]), [0]) == pytest.approx(-math.log(1e-12))
    with pytest.raises(EmptyMask):
        nn.masked_cross_entropy(probs, np.array([1]), np.zeros(1, bool))


@pytest.mark.parametrize("training", [False, True])
def test_mlp_gradient_check(training):
    d = six_node_dataset()
    x = d.features.toarray()
    cfg = TrainConfig(lambda_l2=0.005, dropout_rate=0.3)
    mask = np.array([0, 2, 3, 5])

    def loss(p):
        rng = np.random.default_rng(42)
        h, _ = nn.mlp_forward(x, p, cfg, training, rng)
        return nn.masked_cross_entropy(nn.softmax_rows(h), d.labels, mask, p, cfg.lambda_l2)

    p = fixed_params()
    h, cache = nn.mlp_forward(x, p, cfg, training, np.random.default_rng(42))
    grads = nn.mlp_backward(cache, nn.cross_entropy_grad(nn.softmax_rows(h), d.labels, mask))
    grads["W0"] += nn.l2_grad(p.W0, cfg.lambda_l2)
    assert max_rel_error(grads, numeric_grads(loss, p)) < 1e-4


def test_zero_upstream_zero_grads():
    p = fixed_params()
    _, cache = nn.mlp_forward(np.ones((6, 4)), p, EVAL)
    grads = nn.mlp_backward(cache, np.zeros((6, 2)))
    assert all(not np.any(g) for g in grads.values())


def test_stale_cache():
    _, cache = nn.mlp_forward(np.ones((6, 4)), fixed_params(), EVAL)
    with pytest.raises(StaleCache):
        nn.mlp_backward(cache, np.zeros((5, 2)))


def test_l2_gradient_linear_in_lambda():
    w = np.random.default_rng(0).normal(size=(3, 3))
    np.testing.assert_array_equal(nn.l2_grad(w, 0.01), 2 * nn.l2_grad(w, 0.005))


def scalar_params(w):
    return MlpParams(np.array([[w]]), np.zeros(1), np.zeros((1, 1)), np.zeros(1))


def test_adam_zero_gradient():
    p = fixed_params()
    s = AdamState.zeros_like(p)
    s.m["W0"] += 1.0
    zeros = {k: np.zeros_like(v) for k, v in p.as_dict().items()}
    q, s2 = nn.adam_step(p, zeros, s, 0.01)
    np.testing.assert_array_equal(q.b0, p.b0)
    np.testing.assert_allclose(s2.m["W0"], 0.9)
    assert s2.step == 1


def test_adam_first_step():
    q, s = nn.adam_step(scalar_params(0.0), {"W0": np.array([[1.0]]), "b0": np.zeros(1), "W1": np.zeros((1, 1)), "b1": np.zeros(1)},
                        AdamState.zeros_like(scalar_params(0.0)), 0.01)
    # m_hat = v_hat = 1 after bias correction
    assert q.W0[0, 0] == pytest.approx(-0.01 / (1 + 1e-8), abs=1e-15)


def test_adam_deterministic_trajectory():
    def run():
        p = fixed_params()
        s = AdamState.zeros_like(p)
        rng = np.random.default_rng(0)
        for _ in range(5):
            grads = {k: rng.normal(size=v.shape) for k, v in p.as_dict().items()}
            p, s = nn.adam_step(p, grads, s, 0.01)
        return p

    a, b = run(), run()
    assert all(np.array_equal(a.as_dict()[k], b.as_dict()[k]) for k in a.as_dict())


def test_adam_shape_mismatch():
    p = fixed_params()
    grads = {k: np.zeros(3) for k in p.as_dict()}
    with pytest.raises(ShapeMismatch):
        nn.adam_step(p, grads, AdamState.zeros_like(p), 0.01)


def test_glorot_bounds():
    w = nn.glorot_uniform(np.random.default_rng(0), 30, 70)
    assert np.abs(w).max() <= math.sqrt(6 / 100)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(dropout_rate=1.0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
