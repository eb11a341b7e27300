"""Mini-batch computational graphs: Neighbor Sampling and ShaDow K-Hop Sampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Literal, Sequence

import numpy as np
from numpy.typing import NDArray

from app.core.errors import ContractError, NodeRangeError, ParameterError
from app.graph.store import Graph, neighbors
from app.util import rng

DEFAULT_FANOUTS = (15, 10, 5)


@dataclass(frozen=True)
class Block:
    """One layer of message passing.

    ``dst_nodes`` is a prefix of ``src_nodes``; ``edges`` is an ``(E, 2)`` array
    of ``(src_index, dst_index)`` pairs sorted by dst, then src.
    """

    src_nodes: NDArray[np.int64]
    dst_nodes: NDArray[np.int64]
    edges: NDArray[np.int64]

    @property
    def num_src(self) -> int:
        return int(self.src_nodes.shape[0])

    @property
    def num_dst(self) -> int:
        return int(self.dst_nodes.shape[0])

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    def validate(self) -> None:
        n_dst = self.num_dst
        if not np.array_equal(self.src_nodes[:n_dst], self.dst_nodes):
            raise ContractError("dst_nodes must be a prefix of src_nodes")
        if self.edges.shape != (self.num_edges, 2):
            raise ContractError("edges must have shape (E, 2)")
        if self.num_edges:
            s, d = self.edges[:, 0], self.edges[:, 1]
            if s.min() < 0 or s.max() >= self.num_src or d.min() < 0 or d.max() >= n_dst:
                raise ContractError("edge index out of range")
            if np.unique(d * self.num_src + s).size != self.num_edges:
                raise ContractError("duplicate edge in block")


@dataclass(frozen=True)
class MiniBatch:
    batch_id: int
    seeds: NDArray[np.int64]
    blocks: List[Block]
    labels: NDArray[np.int64]

    @property
    def num_seeds(self) -> int:
        return int(self.seeds.shape[0])

    @property
    def input_nodes(self) -> NDArray[np.int64]:
        return self.blocks[0].src_nodes

    @property
    def num_edges(self) -> int:
        return sum(b.num_edges for b in self.blocks)

    def validate(self) -> None:
        """Raise ContractError when a chaining or seed invariant is broken."""

        if not self.blocks:
            raise ContractError("mini-batch has no blocks")
        for block in self.blocks:
            block.validate()
        for lower, upper in zip(self.blocks, self.blocks[1:]):
            if not np.array_equal(lower.dst_nodes, upper.src_nodes):
                raise ContractError("blocks[l].dst_nodes must equal blocks[l+1].src_nodes")
        # seeds are always the leading rows of the last layer's output
        if not np.array_equal(self.blocks[-1].dst_nodes[: self.num_seeds], self.seeds):
            raise ContractError("seeds must lead the last block's dst_nodes")
        if self.labels.shape != self.seeds.shape:
            raise ContractError("labels must align with seeds")


@dataclass(frozen=True)
class SamplerConfig:
    kind: Literal["neighbor", "shadow"] = "neighbor"
    fanouts: Sequence[int] = field(default_factory=lambda: list(DEFAULT_FANOUTS))
    model_depth: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("neighbor", "shadow"):
            raise ParameterError(f"unknown sampler kind {self.kind!r}")
        if not self.fanouts:
            raise ParameterError("fanouts must be non-empty")
        if any(int(f) < 1 for f in self.fanouts):
            raise ParameterError("every fanout must be >= 1")
        if self.model_depth < 1:
            raise ParameterError("model_depth must be >= 1")

    @property
    def num_layers(self) -> int:
        """Depth of the model the sampler feeds."""

        return len(self.fanouts) if self.kind == "neighbor" else self.model_depth


def partition_seeds(
    train_ids: Sequence[int] | NDArray[np.int64], batch_size: int, epoch_seed: rng.Key
) -> List[NDArray[np.int64]]:
    if batch_size < 1:
        raise ParameterError("batch_size must be >= 1")
    ids = np.asarray(train_ids, dtype=np.int64)
    if ids.size == 0:
        return []
    shuffled = ids[rng.stream(epoch_seed, rng.SHUFFLE).permutation(ids.size)]
    return [shuffled[i : i + batch_size] for i in range(0, ids.size, batch_size)]


def _check_seeds(g: Graph, seeds: NDArray[np.int64]) -> None:
    if seeds.size and (seeds.min() < 0 or seeds.max() >= g.num_nodes):
        raise NodeRangeError(f"seed out of range [0, {g.num_nodes})")


def _expand(
    g: Graph, seeds: NDArray[np.int64], fanouts: Sequence[int], seed: rng.Key
) -> List[Block]:
    """Layer-by-layer neighbor expansion from the seeds outward.

    Hop ``k`` builds block ``L-1-k`` with fanout ``fanouts[L-1-k]``, so the
    list reads input-layer-first. Each frontier node draws up to ``fanout``
    distinct neighbors; nodes new to the frontier are appended in discovery order.
    """

    num_layers = len(fanouts)
    blocks: List[Block] = [None] * num_layers  # type: ignore[list-item]
    frontier = seeds
    for hop in range(num_layers):
        layer = num_layers - 1 - hop
        fanout = int(fanouts[layer])
        gen = rng.stream(seed, layer)
        src_nodes: List[int] = [int(v) for v in frontier]
        index: Dict[int, int] = {}
        for pos, v in enumerate(src_nodes):
            index.setdefault(v, pos)
        pairs: List[tuple[int, int]] = []
        for dst_pos, v in enumerate(frontier):
            nbrs = neighbors(g, int(v))
            if nbrs.size > fanout:
                nbrs = np.sort(gen.choice(nbrs, size=fanout, replace=False))
            for u in nbrs:
                u = int(u)
                pos = index.get(u)
                if pos is None:
                    pos = len(src_nodes)
                    index[u] = pos
                    src_nodes.append(u)
                pairs.append((pos, dst_pos))
        edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            edges = edges[np.lexsort((edges[:, 0], edges[:, 1]))]
        blocks[layer] = Block(
            src_nodes=np.array(src_nodes, dtype=np.int64),
            dst_nodes=np.asarray(frontier, dtype=np.int64),
            edges=edges,
        )
        frontier = blocks[layer].src_nodes
    return blocks


def neighbor_sample(
    g: Graph,
    seeds: Sequence[int] | NDArray[np.int64],
    fanouts: Sequence[int],
    seed: rng.Key,
    batch_id: int = 0,
) -> MiniBatch:
    seeds = np.asarray(seeds, dtype=np.int64)
    _check_seeds(g, seeds)
    blocks = _expand(g, seeds, fanouts, seed)
    return MiniBatch(batch_id=batch_id, seeds=seeds, blocks=blocks, labels=g.labels[seeds])


def induced_edges(g: Graph, nodes: NDArray[np.int64]) -> NDArray[np.int64]:
    """All graph edges with both endpoints in ``nodes``, as local index pairs."""

    index = {int(v): i for i, v in enumerate(nodes)}
    pairs: List[tuple[int, int]] = []
    for dst_pos, v in enumerate(nodes):
        for u in neighbors(g, int(v)):
            pos = index.get(int(u))
            if pos is not None:
                pairs.append((pos, dst_pos))
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    if edges.size:
        edges = edges[np.lexsort((edges[:, 0], edges[:, 1]))]
    return edges


def shadow_sample(
    g: Graph,
    seeds: Sequence[int] | NDArray[np.int64],
    fanouts: Sequence[int],
    model_depth: int,
    seed: rng.Key,
    batch_id: int = 0,
) -> MiniBatch:
    """ShaDow K-Hop: collect ``len(fanouts)`` hops, induce, repeat ``model_depth`` times.

    Per-root subgraphs of one mini-batch are merged into a single node set whose
    prefix is the seeds; the loss is read from that prefix only.
    """

    if model_depth < 1:
        raise ParameterError("model_depth must be >= 1")
    seeds = np.asarray(seeds, dtype=np.int64)
    _check_seeds(g, seeds)
    # the same expansion as neighbor_sample, so a shadow batch covers its node set
    nodes = _expand(g, seeds, fanouts, seed)[0].src_nodes
    edges = induced_edges(g, nodes)
    block = Block(src_nodes=nodes, dst_nodes=nodes, edges=edges)
    return MiniBatch(
        batch_id=batch_id,
        seeds=seeds,
        blocks=[block] * model_depth,
        labels=g.labels[seeds],
    )


def sample(g: Graph, seeds: Sequence[int] | NDArray[np.int64], config: SamplerConfig,
           key: rng.Key, batch_id: int = 0) -> MiniBatch:
    """Dispatch on ``config.kind``; ``key`` names the batch's random stream."""

    if config.kind == "neighbor":
        return neighbor_sample(g, seeds, config.fanouts, key, batch_id)
    return shadow_sample(g, seeds, config.fanouts, config.model_depth, key, batch_id)
