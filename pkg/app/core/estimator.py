"""
estimator.py — workload of a mini-batch, computed once before assignment.

aggregations: accumulate operations of the computational graph (edges, plus
one self term per dst node for GCN). This is the balancer's sort key.
flops: aggregations × input width + dense transform FLOPs; priced only by the
device cost model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

from app.graph.sampler import MiniBatch
from app.model.gnn import MATRICES_PER_LAYER, ModelKind


@dataclass(frozen=True)
class WorkloadEstimate:
    batch_id: int
    aggregations: int
    flops: int
    num_input_nodes: int = 0
    num_seeds: int = 0
    num_edges: int = 0


def estimate(batch: MiniBatch, layer_dims: Sequence[int], kind: ModelKind) -> WorkloadEstimate:
    matrices = MATRICES_PER_LAYER[kind]
    aggregations = 0
    flops = 0
    for l, block in enumerate(batch.blocks):
        in_dim, out_dim = int(layer_dims[l]), int(layer_dims[l + 1])
        agg_l = block.num_edges + (block.num_dst if kind == "gcn" else 0)
        aggregations += agg_l
        flops += agg_l * in_dim + block.num_dst * in_dim * out_dim * matrices
    return WorkloadEstimate(
        batch_id=batch.batch_id,
        aggregations=aggregations,
        flops=flops,
        num_input_nodes=int(batch.input_nodes.shape[0]),
        num_seeds=batch.num_seeds,
        num_edges=batch.num_edges,
    )


def estimate_all(
    batches: Sequence[MiniBatch], layer_dims: Sequence[int], kind: ModelKind
) -> List[WorkloadEstimate]:
    return [estimate(b, layer_dims, kind) for b in batches]
