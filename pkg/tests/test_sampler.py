import numpy as np
import pytest

from app.core.errors import NodeRangeError, ParameterError
from app.graph.sampler import (
    SamplerConfig,
    induced_edges,
    neighbor_sample,
    partition_seeds,
    sample,
    shadow_sample,
)
from app.graph.store import generate_synthetic, neighbors
from tests.oracles import graph_from_pairs, induced_by_membership


def _edge_set(block):
    return {tuple(e) for e in block.edges.tolist()}


def test_partition_chunk_sizes():
    chunks = partition_seeds(np.arange(10), 4, epoch_seed=(0, 0))
    assert [len(c) for c in chunks] == [4, 4, 2]
    assert sorted(np.concatenate(chunks).tolist()) == list(range(10))


def test_partition_single_chunk_is_permutation():
    chunks = partition_seeds(np.arange(7), 100, epoch_seed=3)
    assert len(chunks) == 1
    assert sorted(chunks[0].tolist()) == list(range(7))


def test_partition_deterministic_and_epoch_dependent():
    a = partition_seeds(np.arange(50), 8, epoch_seed=(1, 2))
    b = partition_seeds(np.arange(50), 8, epoch_seed=(1, 2))
    c = partition_seeds(np.arange(50), 8, epoch_seed=(1, 3))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not all(np.array_equal(x, y) for x, y in zip(a, c))


def test_partition_rejects_zero_batch():
    with pytest.raises(ParameterError):
        partition_seeds(np.arange(3), 0, epoch_seed=0)


def test_star_center_takes_all_leaves():
    g = graph_from_pairs([(0, 1), (0, 2), (0, 3)], 4)
    mb = neighbor_sample(g, [0], [3], seed=0)
    (block,) = mb.blocks
    assert block.num_edges == 3
    assert set(block.edges[:, 1].tolist()) == {0}
    assert sorted(block.src_nodes[1:].tolist()) == [1, 2, 3]
    mb.validate()


def test_low_degree_samples_every_neighbor(small_graph):
    mb = neighbor_sample(small_graph, [5, 9], [10, 10], seed=(0, 1))
    top = mb.blocks[-1]
    for pos, v in enumerate(top.dst_nodes.tolist()):
        got = {int(top.src_nodes[s]) for s, d in top.edges.tolist() if d == pos}
        assert got == set(neighbors(small_graph, v).tolist())


def test_fanout_caps_and_no_duplicates():
    g = generate_synthetic("uniform", 300, 20, 2, 2, seed=2)
    mb = neighbor_sample(g, np.arange(16), [4, 3], seed=(5, 0))
    mb.validate()
    for block, fanout in zip(mb.blocks, [4, 3]):
        per_dst = np.bincount(block.edges[:, 1], minlength=block.num_dst)
        assert per_dst.max() <= fanout
        assert len(_edge_set(block)) == block.num_edges


def test_degree_zero_seeds():
    g = graph_from_pairs([(3, 4)], 6)
    mb = neighbor_sample(g, [0, 1, 2], [2, 2], seed=0)
    for block in mb.blocks:
        assert block.num_edges == 0
        assert block.src_nodes.tolist() == [0, 1, 2]
        assert block.dst_nodes.tolist() == [0, 1, 2]


def test_neighbor_sample_is_deterministic():
    g = generate_synthetic("power_law", 500, 8, 2, 2, seed=1)
    a = neighbor_sample(g, [1, 2, 3, 4], [5, 3], seed=(9, 4, 0, 1))
    b = neighbor_sample(g, [1, 2, 3, 4], [5, 3], seed=(9, 4, 0, 1))
    for x, y in zip(a.blocks, b.blocks):
        assert x.src_nodes.tobytes() == y.src_nodes.tobytes()
        assert x.edges.tobytes() == y.edges.tobytes()


def test_blocks_chain_on_random_graphs():
    for trial in range(10):
        g = generate_synthetic("power_law", 200, 5, 2, 2, seed=trial)
        seeds = np.random.default_rng(trial).choice(200, 8, replace=False)
        for cfg in (SamplerConfig("neighbor", [4, 3, 2]), SamplerConfig("shadow", [3, 2], model_depth=3)):
            mb = sample(g, seeds, cfg, key=(trial, 4, 0, 0))
            mb.validate()
            assert len(mb.blocks) == cfg.num_layers
            assert np.array_equal(mb.blocks[-1].dst_nodes[: mb.num_seeds], seeds)
            assert np.array_equal(mb.labels, g.labels[seeds])


def test_out_of_range_seed():
    g = graph_from_pairs([(0, 1)], 2)
    with pytest.raises(NodeRangeError):
        neighbor_sample(g, [2], [1], seed=0)


def test_shadow_isolated_seed():
    g = graph_from_pairs([(1, 2)], 3)
    mb = shadow_sample(g, [0], [2, 2], model_depth=4, seed=0)
    assert len(mb.blocks) == 4
    for block in mb.blocks:
        assert block.src_nodes.tolist() == [0]
        assert block.num_edges == 0


def test_shadow_triangle():
    pairs = [(u, v) for u in range(3) for v in range(3) if u != v]
    g = graph_from_pairs(pairs, 3)
    mb = shadow_sample(g, [1], [2], model_depth=2, seed=0)
    assert sorted(mb.blocks[0].src_nodes.tolist()) == [0, 1, 2]
    assert mb.blocks[0].src_nodes[0] == 1
    assert mb.blocks[0].num_edges == 6
    assert np.array_equal(mb.blocks[0].edges, mb.blocks[1].edges)
    assert np.array_equal(mb.blocks[0].src_nodes, mb.blocks[1].src_nodes)


def test_induced_edges_match_membership_filter():
    for trial in range(5):
        rng = np.random.default_rng(100 + trial)
        pairs = [(int(u), int(v)) for u, v in rng.integers(0, 30, (120, 2))]
        g = graph_from_pairs(pairs, 30)
        nodes = rng.choice(30, 12, replace=False).astype(np.int64)
        got = {tuple(e) for e in induced_edges(g, nodes).tolist()}
        src = [p[0] for p in pairs]
        dst = [p[1] for p in pairs]
        assert got == induced_by_membership(src, dst, nodes)


def test_shadow_holds_at_least_neighbor_edges():
    g = generate_synthetic("power_law", 400, 6, 2, 2, seed=8)
    for trial in range(5):
        seeds = np.random.default_rng(trial).choice(400, 6, replace=False)
        key = (trial, 4, 0, 0)
        nb = neighbor_sample(g, seeds, [4, 4], seed=key)
        sh = shadow_sample(g, seeds, [4, 4], model_depth=2, seed=key)
        assert sh.num_edges >= nb.num_edges


def test_sampler_config_validation():
    with pytest.raises(ParameterError):
        SamplerConfig("neighbor", [])
    with pytest.raises(ParameterError):
        SamplerConfig("neighbor", [3, 0])
    with pytest.raises(ParameterError):
        SamplerConfig("cluster", [3])
    assert SamplerConfig().num_layers == 3
    assert SamplerConfig("shadow").num_layers == 5
