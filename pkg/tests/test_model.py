import math

import numpy as np
import pytest

from app.core.errors import ContractError, ParameterError
from app.graph.sampler import Block, MiniBatch, SamplerConfig, neighbor_sample, sample
from app.graph.store import generate_synthetic
from app.model.gnn import (
    Gradients,
    ModelParams,
    accuracy,
    aggregation_matrix,
    forward,
    init_params,
    loss_and_grad,
    normalize_block,
    softmax_cross_entropy,
    weighted_mean,
)
from app.model.optim import SGD, Adam, make_optimizer, sgd_step
from tests.oracles import dense_adjacency, dense_forward, graph_from_pairs, numeric_grad


def _batch(g, kind, seeds, key):
    cfg = SamplerConfig("neighbor", [2, 2]) if kind == "neighbor" else SamplerConfig("shadow", [2], model_depth=2)
    return sample(g, np.asarray(seeds), cfg, key)


def _loss(params, batch, x):
    acts = forward(params, batch, x)
    return loss_and_grad(params, acts, batch)[0]


def _min_hidden_margin(params, batch, x):
    acts = forward(params, batch, x)
    return min(float(np.abs(layer.z).min()) for layer in acts.layers[:-1])


def test_normalize_single_node_gcn():
    block = Block(np.array([0]), np.array([0]), np.zeros((0, 2), dtype=np.int64))
    edge_w, self_w = normalize_block(block, "gcn")
    assert edge_w.size == 0
    assert self_w.tolist() == [1.0]


def test_normalize_sage_mean():
    block = Block(np.array([0, 1, 2, 3]), np.array([0]), np.array([[1, 0], [2, 0], [3, 0]]))
    edge_w, self_w = normalize_block(block, "sage")
    assert self_w is None
    assert np.allclose(edge_w, [1 / 3] * 3)


@pytest.mark.parametrize("kind", ["gcn", "sage"])
def test_aggregation_matches_dense_oracle(tiny_graph, kind):
    mb = neighbor_sample(tiny_graph, [0, 3, 7], [3, 3], seed=(1, 2))
    for block in mb.blocks:
        h = np.random.default_rng(0).normal(size=(block.num_src, 4))
        got = aggregation_matrix(block, kind, np.float64) @ h
        want = dense_adjacency(block, kind) @ h
        assert np.allclose(got, want, rtol=1e-12, atol=1e-12)


def test_identity_gcn_returns_input():
    g = graph_from_pairs([], 1, num_features=3)
    mb = neighbor_sample(g, [0], [1], seed=0)
    params = ModelParams("gcn", (3, 3), ((np.eye(3, dtype=np.float32),),))
    x = g.features[mb.input_nodes]
    acts = forward(params, mb, x, activation="identity")
    assert np.allclose(acts.logits, x)


def test_zero_weights_zero_logits(small_graph):
    mb = neighbor_sample(small_graph, [1, 2, 3], [3, 3], seed=0)
    for kind in ("gcn", "sage"):
        p = init_params(kind, [8, 5, 4], seed=0)
        zero = ModelParams(kind, p.layer_dims, tuple(tuple(np.zeros_like(w) for w in g) for g in p.weights))
        acts = forward(zero, mb, small_graph.features[mb.input_nodes])
        assert not acts.logits.any()
        loss, _ = loss_and_grad(zero, acts, mb)
        assert loss == pytest.approx(math.log(4), rel=1e-6)


def test_uniform_logits_loss_is_log_c():
    loss, d = softmax_cross_entropy(np.zeros((5, 7)), np.array([0, 1, 2, 3, 6]))
    assert loss == pytest.approx(math.log(7))
    assert np.allclose(d.sum(axis=1), 0.0)


@pytest.mark.parametrize("kind", ["gcn", "sage"])
@pytest.mark.parametrize("sampler", ["neighbor", "shadow"])
def test_forward_matches_dense_reference(tiny_graph, kind, sampler):
    for trial in range(3):
        seeds = np.random.default_rng(trial).choice(12, 3, replace=False)
        mb = _batch(tiny_graph, sampler, seeds, (trial, 4, 0, 0))
        params = init_params(kind, [3, 5, 3], seed=trial).astype(np.float64)
        x = tiny_graph.features[mb.input_nodes].astype(np.float64)
        got = forward(params, mb, x).logits
        want = dense_forward(params, mb, x)
        assert np.allclose(got, want, rtol=1e-5, atol=1e-9)


@pytest.mark.parametrize("kind", ["gcn", "sage"])
@pytest.mark.parametrize("sampler", ["neighbor", "shadow"])
def test_gradients_match_finite_differences(tiny_graph, kind, sampler):
    checked = 0
    for trial in range(100):
        if checked == 5:
            break
        seeds = np.random.default_rng(50 + trial).choice(12, 3, replace=False)
        mb = _batch(tiny_graph, sampler, seeds, (trial, 4, 1, 0))
        params = init_params(kind, [3, 4, 3], seed=trial).astype(np.float64)
        x = tiny_graph.features[mb.input_nodes].astype(np.float64)
        # keep ReLU inputs away from the kink so central differences stay smooth
        if _min_hidden_margin(params, mb, x) < 0.02:
            continue
        _, grads = loss_and_grad(params, forward(params, mb, x), mb)
        for l, group in enumerate(params.weights):
            for m in range(len(group)):
                num = numeric_grad(lambda p: _loss(p, mb, x), params, l, m, h=1e-3)
                assert np.allclose(grads.weights[l][m], num, rtol=1e-4, atol=1e-6)
        checked += 1
    assert checked == 5


def test_duplicated_seeds_leave_gradients_unchanged():
    ring = [(v, (v + 1) % 10) for v in range(10)] + [((v + 1) % 10, v) for v in range(10)]
    g = graph_from_pairs(ring, 10, num_features=4, num_classes=3, seed=2)
    params = init_params("sage", [4, 6, 3], seed=1).astype(np.float64)
    once = neighbor_sample(g, [2, 7], [3, 3], seed=0)
    twice = neighbor_sample(g, [2, 7, 2, 7], [3, 3], seed=0)
    _, g1 = loss_and_grad(params, forward(params, once, g.features[once.input_nodes].astype(np.float64)), once)
    _, g2 = loss_and_grad(params, forward(params, twice, g.features[twice.input_nodes].astype(np.float64)), twice)
    assert g2.sample_count == 4
    for a, b in zip(g1.weights, g2.weights):
        for x, y in zip(a, b):
            assert np.allclose(x, y, rtol=1e-10, atol=1e-12)


def test_permuting_sources_keeps_outputs():
    block = Block(np.array([0, 1, 2, 3, 4]), np.array([0, 1]), np.array([[2, 0], [3, 0], [4, 1], [2, 1]]))
    perm = np.array([0, 1, 4, 2, 3])
    inv = np.argsort(perm)
    moved = Block(block.src_nodes[perm], block.dst_nodes, np.stack([inv[block.edges[:, 0]], block.edges[:, 1]], 1))
    x = np.random.default_rng(3).normal(size=(5, 3))
    for kind in ("gcn", "sage"):
        params = init_params(kind, [3, 2], seed=0).astype(np.float64)
        a = forward(params, MiniBatch(0, block.dst_nodes, [block], np.array([0, 1])), x).logits
        b = forward(params, MiniBatch(0, moved.dst_nodes, [moved], np.array([0, 1])), x[perm]).logits
        assert np.allclose(a, b)


def test_forward_shape_mismatch(small_graph):
    mb = neighbor_sample(small_graph, [0, 1], [2, 2], seed=0)
    params = init_params("gcn", [8, 4, 4], seed=0)
    with pytest.raises(ContractError):
        forward(params, mb, np.zeros((mb.input_nodes.size + 1, 8), dtype=np.float32))
    with pytest.raises(ContractError):
        forward(init_params("gcn", [8, 4], seed=0), mb, small_graph.features[mb.input_nodes])


def test_params_shape_invariants():
    p = init_params("sage", [8, 4, 2], seed=0)
    assert [len(g) for g in p.weights] == [2, 2]
    assert p.dtype == np.float32
    assert len(init_params("gcn", [8, 4, 2], seed=0).weights[0]) == 1
    with pytest.raises(ContractError):
        ModelParams("gcn", (3, 2), ((np.zeros((2, 2), dtype=np.float32),),))
    with pytest.raises(ParameterError):
        init_params("gat", [3, 2], seed=0)
    again = init_params("sage", [8, 4, 2], seed=0)
    assert all(np.array_equal(a, b) for ga, gb in zip(p.weights, again.weights) for a, b in zip(ga, gb))


def test_sgd_step_examples():
    p = ModelParams("gcn", (1, 1), ((np.array([[1.0]], dtype=np.float32),),))
    g = Gradients(((np.array([[0.5]], dtype=np.float32),),), sample_count=1)
    assert sgd_step(p, g, 0.1).weights[0][0][0, 0] == pytest.approx(0.95)
    assert sgd_step(p, g, 0.0).weights[0][0][0, 0] == 1.0
    zero = Gradients(((np.zeros((1, 1), dtype=np.float32),),), sample_count=1)
    assert sgd_step(p, zero, 0.1).weights[0][0][0, 0] == 1.0
    bad = Gradients(((np.zeros((2, 1), dtype=np.float32),),), sample_count=1)
    with pytest.raises(ContractError):
        sgd_step(p, bad, 0.1)


def test_weighted_mean_of_identical_gradients():
    w = np.random.default_rng(0).normal(size=(3, 2)).astype(np.float32)
    g = Gradients(((w,),), sample_count=16)
    mean = weighted_mean([g, Gradients(((w.copy(),),), sample_count=16)])
    assert mean.sample_count == 32
    assert np.allclose(mean.weights[0][0], w, rtol=1e-7)


def test_weighted_mean_uses_sample_counts():
    a = Gradients(((np.ones((1, 1)),),), sample_count=1)
    b = Gradients(((np.full((1, 1), 4.0),),), sample_count=3)
    assert weighted_mean([a, b]).weights[0][0][0, 0] == pytest.approx(3.25)


def test_optimizers():
    assert isinstance(make_optimizer("sgd", 0.1), SGD)
    assert isinstance(make_optimizer("adam", 0.1), Adam)
    with pytest.raises(ParameterError):
        make_optimizer("rmsprop", 0.1)
    p = ModelParams("gcn", (1, 1), ((np.array([[1.0]], dtype=np.float32),),))
    g = Gradients(((np.array([[2.0]], dtype=np.float32),),), sample_count=1)
    out = Adam(lr=0.1).step(p, g)
    # first Adam step moves each weight by lr against the gradient sign
    assert out.weights[0][0][0, 0] == pytest.approx(0.9, rel=1e-5)


def test_training_reduces_loss():
    g = generate_synthetic("uniform", 120, 4, 6, 3, seed=4)
    params = init_params("sage", [6, 16, 3], seed=0)
    mb = neighbor_sample(g, np.arange(40), [4, 4], seed=0)
    x = g.features[mb.input_nodes]
    opt = SGD(0.2)
    first = _loss(params, mb, x)
    for _ in range(50):
        _, grads = loss_and_grad(params, forward(params, mb, x), mb)
        params = opt.step(params, grads)
    assert _loss(params, mb, x) < first
    assert 0.0 <= accuracy(params, mb, x) <= 1.0
