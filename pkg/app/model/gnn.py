"""GCN and GraphSAGE layers on sampled blocks, with hand-written backward.

GCN layer:  H' = σ(Â H W), Â symmetric-normalised with logical self-loops.
SAGE layer: H' = σ(H_dst W1 + (Â H) W2), Â the mean over in-neighbors.
σ is ReLU on every layer but the last, which emits raw logits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Literal, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from app.core.errors import ContractError, ParameterError
from app.graph.sampler import Block, MiniBatch
from app.util import rng

ModelKind = Literal["gcn", "sage"]
Activation = Literal["relu", "identity"]
MATRICES_PER_LAYER = {"gcn": 1, "sage": 2}

Weights = Tuple[Tuple[NDArray[np.floating], ...], ...]


@dataclass(frozen=True)
class ModelParams:
    kind: ModelKind
    layer_dims: Tuple[int, ...]
    weights: Weights

    def __post_init__(self) -> None:
        if self.kind not in MATRICES_PER_LAYER:
            raise ParameterError(f"unknown model kind {self.kind!r}")
        if len(self.weights) != len(self.layer_dims) - 1:
            raise ContractError("one weight group per layer expected")
        per_layer = MATRICES_PER_LAYER[self.kind]
        for l, group in enumerate(self.weights):
            if len(group) != per_layer:
                raise ContractError(f"{self.kind} layer {l} needs {per_layer} matrices")
            for w in group:
                if w.shape != (self.layer_dims[l], self.layer_dims[l + 1]):
                    raise ContractError(
                        f"layer {l} weight shape {w.shape} does not chain "
                        f"{self.layer_dims[l]} -> {self.layer_dims[l + 1]}"
                    )

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def dtype(self) -> np.dtype:
        return self.weights[0][0].dtype

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            self.kind,
            self.layer_dims,
            tuple(tuple(w.astype(dtype) for w in group) for group in self.weights),
        )


@dataclass(frozen=True)
class Gradients:
    weights: Weights
    sample_count: int

    def check_against(self, params: ModelParams) -> None:
        if len(self.weights) != len(params.weights):
            raise ContractError("gradient layer count does not match params")
        for g_group, w_group in zip(self.weights, params.weights):
            if len(g_group) != len(w_group):
                raise ContractError("gradient matrix count does not match params")
            for g, w in zip(g_group, w_group):
                if g.shape != w.shape:
                    raise ContractError(f"gradient shape {g.shape} != weight shape {w.shape}")


def weighted_mean(grads: Sequence[Gradients]) -> Gradients:
    """Sample-count weighted mean, reduced in the order given."""

    if not grads:
        raise ContractError("nothing to average")
    total = sum(g.sample_count for g in grads)
    if total <= 0:
        raise ContractError("averaged gradients carry no samples")
    out: List[List[NDArray[np.floating]]] = []
    for l, group in enumerate(grads[0].weights):
        out.append([])
        for m, first in enumerate(group):
            acc = np.zeros_like(first)
            for g in grads:
                acc += g.weights[l][m] * first.dtype.type(g.sample_count / total)
            out[l].append(acc)
    return Gradients(tuple(tuple(group) for group in out), total)


@dataclass(frozen=True)
class LayerCache:
    h_in: NDArray[np.floating]
    agg: NDArray[np.floating]
    z: NDArray[np.floating]
    out: NDArray[np.floating]
    matrix: sp.csr_matrix


@dataclass(frozen=True)
class Activations:
    layers: List[LayerCache]
    activation: Activation

    @property
    def logits(self) -> NDArray[np.floating]:
        return self.layers[-1].out

    @property
    def aggregation_counts(self) -> List[int]:
        """Accumulate operations each layer's aggregation actually performed."""

        return [int(layer.matrix.nnz) for layer in self.layers]


def init_params(kind: ModelKind, layer_dims: Sequence[int], seed: int) -> ModelParams:
    """Glorot-uniform weights drawn from the model's own random stream."""

    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ParameterError(f"invalid layer dims {dims}")
    per_layer = MATRICES_PER_LAYER.get(kind)
    if per_layer is None:
        raise ParameterError(f"unknown model kind {kind!r}")
    weights = []
    for l in range(len(dims) - 1):
        limit = np.sqrt(6.0 / (dims[l] + dims[l + 1]))
        weights.append(
            tuple(
                rng.stream(seed, rng.MODEL, l, m)
                .uniform(-limit, limit, (dims[l], dims[l + 1]))
                .astype(np.float32)
                for m in range(per_layer)
            )
        )
    return ModelParams(kind, dims, tuple(weights))


def normalize_block(
    block: Block, kind: ModelKind
) -> Tuple[NDArray[np.float64], NDArray[np.float64] | None]:
    """Edge weights aligned with ``block.edges`` plus per-dst self-loop weights.

    The self-loop array is ``None`` for SAGE, whose self term goes through W1.
    """

    src, dst = block.edges[:, 0], block.edges[:, 1]
    deg_in = np.bincount(dst, minlength=block.num_dst).astype(np.float64)
    if kind == "gcn":
        deg_out = np.bincount(src, minlength=block.num_src).astype(np.float64)
        edge_w = 1.0 / np.sqrt((deg_in[dst] + 1.0) * (deg_out[src] + 1.0))
        return edge_w, 1.0 / (deg_in + 1.0)
    if kind == "sage":
        return 1.0 / deg_in[dst], None
    raise ParameterError(f"unknown model kind {kind!r}")


def aggregation_matrix(block: Block, kind: ModelKind, dtype=np.float32) -> sp.csr_matrix:
    """Â as a ``num_dst x num_src`` CSR matrix with ascending src order per row."""

    edge_w, self_w = normalize_block(block, kind)
    rows, cols, data = block.edges[:, 1], block.edges[:, 0], edge_w
    if self_w is not None:
        diag = np.arange(block.num_dst, dtype=np.int64)
        rows = np.concatenate([rows, diag])
        cols = np.concatenate([cols, diag])
        data = np.concatenate([data, self_w])
    mat = sp.csr_matrix(
        (data.astype(dtype), (rows, cols)), shape=(block.num_dst, block.num_src)
    )
    mat.sort_indices()
    return mat


def _activate(z: NDArray[np.floating], activation: Activation) -> NDArray[np.floating]:
    return np.maximum(z, 0) if activation == "relu" else z


def forward(
    params: ModelParams,
    batch: MiniBatch,
    input_features: NDArray[np.floating],
    activation: Activation = "relu",
) -> Activations:
    if len(batch.blocks) != params.num_layers:
        raise ContractError(
            f"batch has {len(batch.blocks)} blocks, model has {params.num_layers} layers"
        )
    expected = (batch.blocks[0].num_src, params.layer_dims[0])
    if input_features.shape != expected:
        raise ContractError(f"input features {input_features.shape} != {expected}")

    dtype = params.dtype
    h = np.asarray(input_features, dtype=dtype)
    layers: List[LayerCache] = []
    last = params.num_layers - 1
    for l, (block, group) in enumerate(zip(batch.blocks, params.weights)):
        if h.shape[0] != block.num_src:
            raise ContractError(f"layer {l}: {h.shape[0]} input rows for {block.num_src} src nodes")
        mat = aggregation_matrix(block, params.kind, dtype)
        agg = np.asarray(mat @ h, dtype=dtype)
        if params.kind == "gcn":
            z = agg @ group[0]
        else:
            z = h[: block.num_dst] @ group[0] + agg @ group[1]
        out = z if l == last else _activate(z, activation)
        layers.append(LayerCache(h_in=h, agg=agg, z=z, out=out, matrix=mat))
        h = out
    return Activations(layers=layers, activation=activation)


def softmax_cross_entropy(
    logits: NDArray[np.floating], labels: NDArray[np.int64]
) -> Tuple[float, NDArray[np.floating]]:
    """Mean loss and its gradient w.r.t. ``logits``."""

    b = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    loss = float(-log_p[np.arange(b), labels].mean())
    d = np.exp(log_p)
    d[np.arange(b), labels] -= 1
    return loss, d / logits.dtype.type(b)


def loss_and_grad(
    params: ModelParams, acts: Activations, batch: MiniBatch
) -> Tuple[float, Gradients]:
    b = batch.num_seeds
    if b == 0:
        raise ContractError("cannot take a loss over an empty batch")
    logits = acts.logits
    loss, d_seed = softmax_cross_entropy(logits[:b], batch.labels)
    d_out = np.zeros_like(logits)
    d_out[:b] = d_seed

    grads: List[Tuple[NDArray[np.floating], ...]] = [()] * params.num_layers
    last = params.num_layers - 1
    for l in range(last, -1, -1):
        cache = acts.layers[l]
        group = params.weights[l]
        n_dst = cache.z.shape[0]
        d_z = d_out if l == last or acts.activation == "identity" else d_out * (cache.z > 0)
        if params.kind == "gcn":
            grads[l] = (cache.agg.T @ d_z,)
            d_agg = d_z @ group[0].T
            d_h = np.asarray(cache.matrix.T @ d_agg, dtype=d_z.dtype)
        else:
            grads[l] = (cache.h_in[:n_dst].T @ d_z, cache.agg.T @ d_z)
            d_agg = d_z @ group[1].T
            d_h = np.asarray(cache.matrix.T @ d_agg, dtype=d_z.dtype)
            d_h[:n_dst] += d_z @ group[0].T
        d_out = d_h
    return loss, Gradients(tuple(grads), sample_count=b)


def predict(params: ModelParams, batch: MiniBatch, input_features: NDArray[np.floating]) -> NDArray[np.int64]:
    logits = forward(params, batch, input_features).logits[: batch.num_seeds]
    return logits.argmax(axis=1)


def accuracy(params: ModelParams, batch: MiniBatch, input_features: NDArray[np.floating]) -> float:
    return float((predict(params, batch, input_features) == batch.labels).mean())
