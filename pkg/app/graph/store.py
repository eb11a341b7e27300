"""
store.py — immutable CSR graph held in "host memory".

Edges are directed as stored: row v lists N(v), the nodes v aggregates from.
Self-loops are never stored (models add them logically) and duplicate edges
collapse to one. Features are float32, so one node row costs ``f0 * 4`` bytes
in every transfer count.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal

import numpy as np
from numpy.typing import NDArray

from app.core.errors import ContractError, GraphParseError, NodeRangeError, ParameterError
from app.core.logs import log
from app.util import rng

FEATURE_BYTES = 4
POWER_LAW_EXPONENT = 2.1


@dataclass(frozen=True)
class Graph:
    num_nodes: int
    row_ptr: NDArray[np.int64]
    col_idx: NDArray[np.int64]
    features: NDArray[np.float32]
    labels: NDArray[np.int64]
    num_classes: int

    @property
    def num_edges(self) -> int:
        return int(self.row_ptr[-1])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def row_bytes(self) -> int:
        return self.feature_dim * FEATURE_BYTES

    def degrees(self) -> NDArray[np.int64]:
        return np.diff(self.row_ptr)

    def validate(self) -> None:
        rp, ci = self.row_ptr, self.col_idx
        if rp.shape != (self.num_nodes + 1,):
            raise ContractError(f"row_ptr has shape {rp.shape}, expected ({self.num_nodes + 1},)")
        if rp[0] != 0 or rp[-1] != ci.shape[0]:
            raise ContractError("row_ptr must start at 0 and end at len(col_idx)")
        if np.any(np.diff(rp) < 0):
            raise ContractError("row_ptr must be non-decreasing")
        if ci.size and (ci.min() < 0 or ci.max() >= self.num_nodes):
            raise ContractError(f"col_idx out of range [0, {self.num_nodes})")
        if self.features.shape[0] != self.num_nodes:
            raise ContractError(f"{self.features.shape[0]} feature rows for {self.num_nodes} nodes")
        if self.labels.shape != (self.num_nodes,):
            raise ContractError(f"labels have shape {self.labels.shape}, expected ({self.num_nodes},)")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ContractError(f"labels must lie in [0, {self.num_classes})")


def neighbors(g: Graph, v: int) -> NDArray[np.int64]:
    if not 0 <= v < g.num_nodes:
        raise NodeRangeError(f"node {v} out of range [0, {g.num_nodes})")
    return g.col_idx[g.row_ptr[v] : g.row_ptr[v + 1]]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def from_edges(
    src: NDArray[np.int64],
    dst: NDArray[np.int64],
    num_nodes: int,
    features: NDArray[np.float32],
    labels: NDArray[np.int64],
    num_classes: int,
) -> Graph:
    """Build CSR rows ``src -> sorted unique dst``, dropping self-loops."""

    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    keep = src != dst
    keys = np.unique(src[keep] * num_nodes + dst[keep])
    rows, cols = np.divmod(keys, num_nodes) if num_nodes else (keys, keys)
    counts = np.bincount(rows, minlength=num_nodes)
    row_ptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    g = Graph(
        num_nodes=num_nodes,
        row_ptr=_frozen(row_ptr),
        col_idx=_frozen(cols.astype(np.int64)),
        features=_frozen(np.ascontiguousarray(features, dtype=np.float32)),
        labels=_frozen(np.asarray(labels, dtype=np.int64)),
        num_classes=num_classes,
    )
    g.validate()
    return g


def _random_features(num_nodes: int, num_features: int, seed: int) -> NDArray[np.float32]:
    return rng.stream(seed, rng.GRAPH, 1).uniform(-1.0, 1.0, (num_nodes, num_features)).astype(
        np.float32
    )


def _random_labels(num_nodes: int, num_classes: int, seed: int) -> NDArray[np.int64]:
    return rng.stream(seed, rng.GRAPH, 2).integers(0, num_classes, num_nodes).astype(np.int64)


def _decoded(lines: Iterable[bytes]) -> Iterable[tuple[int, str]]:
    for line_no, raw in enumerate(lines, start=1):
        try:
            yield line_no, raw.decode("utf-8").strip()
        except UnicodeDecodeError:
            raise GraphParseError("line is not valid UTF-8", line_no) from None


def _parse_pairs(lines: Iterable[bytes]) -> tuple[list[int], list[int], list[int]]:
    src: list[int] = []
    dst: list[int] = []
    line_nos: list[int] = []
    for line_no, text in _decoded(lines):
        if not text:
            continue
        parts = text.split()
        if len(parts) != 2:
            raise GraphParseError(f"expected 'src dst', got {text!r}", line_no)
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphParseError(f"non-integer node id in {text!r}", line_no) from None
        src.append(u)
        dst.append(v)
        line_nos.append(line_no)
    return src, dst, line_nos


def _parse_labels(lines: Iterable[bytes]) -> NDArray[np.int64]:
    labels: list[int] = []
    for line_no, text in _decoded(lines):
        if not text:
            continue
        try:
            labels.append(int(text))
        except ValueError:
            raise GraphParseError(f"non-integer label {text!r}", line_no) from None
    return np.array(labels, dtype=np.int64)


def load_edge_list(
    path: str | Path,
    num_features: int,
    num_classes: int,
    seed: int,
    num_nodes: int | None = None,
    feature_path: str | Path | None = None,
    labels_path: str | Path | None = None,
) -> Graph:
    """Read a whitespace ``src dst`` edge list (0-based ids) into a Graph.

    ``num_nodes`` declares the id range; when omitted it is inferred as
    ``max id + 1``. Features and labels are drawn from ``seed`` unless files
    are supplied: ``feature_path`` holds row-major little-endian float32 rows,
    ``labels_path`` one integer per line.
    """

    path = Path(path)
    with path.open("rb") as handle:
        src, dst, line_nos = _parse_pairs(handle)

    if num_nodes is None:
        num_nodes = max(max(src, default=-1), max(dst, default=-1)) + 1
    for u, v, line_no in zip(src, dst, line_nos):
        for node in (u, v):
            if not 0 <= node < num_nodes:
                raise NodeRangeError(
                    f"line {line_no}: node {node} out of declared range [0, {num_nodes})"
                )

    if feature_path is not None:
        raw = np.fromfile(Path(feature_path), dtype="<f4")
        if raw.size != num_nodes * num_features:
            raise ParameterError(
                f"feature file holds {raw.size} values, expected {num_nodes}x{num_features}"
            )
        features = raw.reshape(num_nodes, num_features).astype(np.float32)
    else:
        features = _random_features(num_nodes, num_features, seed)

    if labels_path is not None:
        with Path(labels_path).open("rb") as handle:
            labels = _parse_labels(handle)
        if labels.shape != (num_nodes,):
            raise ParameterError(f"labels file holds {labels.size} rows, expected {num_nodes}")
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            raise ParameterError(f"labels must lie in [0, {num_classes})")
    else:
        labels = _random_labels(num_nodes, num_classes, seed)

    g = from_edges(np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64), num_nodes,
                   features, labels, num_classes)
    log.info(f"graph loaded from {path.name}: nodes={g.num_nodes} edges={g.num_edges}")
    return g


def generate_synthetic(
    kind: Literal["uniform", "power_law"],
    num_nodes: int,
    avg_degree: int,
    num_features: int,
    num_classes: int,
    seed: int,
) -> Graph:
    """Deterministic synthetic graph.

    ``uniform`` gives every node exactly ``avg_degree`` distinct neighbors;
    ``power_law`` draws per-node degrees from a Zipf law (exponent 2.1) rescaled
    to ``avg_degree`` on average and capped at ``num_nodes - 1``.
    """

    if num_nodes < 1:
        raise ParameterError("num_nodes must be >= 1")
    if avg_degree < 0:
        raise ParameterError("avg_degree must be >= 0")
    if avg_degree >= num_nodes:
        raise ParameterError(f"avg_degree {avg_degree} must be < num_nodes {num_nodes}")
    if kind not in ("uniform", "power_law"):
        raise ParameterError(f"unknown synthetic kind {kind!r}")

    gen = rng.stream(seed, rng.GRAPH, 0)
    cap = num_nodes - 1
    if kind == "uniform":
        degrees = np.full(num_nodes, avg_degree, dtype=np.int64)
    elif avg_degree == 0:
        degrees = np.zeros(num_nodes, dtype=np.int64)
    else:
        z = gen.zipf(POWER_LAW_EXPONENT, num_nodes).astype(np.float64)
        z = np.minimum(z, float(cap))
        degrees = np.clip(np.rint(z * avg_degree / z.mean()), 0, cap).astype(np.int64)

    src_parts: list[np.ndarray] = []
    dst_parts: list[np.ndarray] = []
    for v in range(num_nodes):
        d = int(degrees[v])
        if d == 0:
            continue
        picks = gen.choice(cap, size=d, replace=False)
        picks = np.where(picks >= v, picks + 1, picks)
        src_parts.append(np.full(d, v, dtype=np.int64))
        dst_parts.append(picks.astype(np.int64))

    src = np.concatenate(src_parts) if src_parts else np.zeros(0, dtype=np.int64)
    dst = np.concatenate(dst_parts) if dst_parts else np.zeros(0, dtype=np.int64)
    g = from_edges(
        src,
        dst,
        num_nodes,
        _random_features(num_nodes, num_features, seed),
        _random_labels(num_nodes, num_classes, seed),
        num_classes,
    )
    log.debug(f"synthetic {kind}: nodes={num_nodes} edges={g.num_edges}")
    return g


def train_ids(g: Graph, fraction: float = 1.0, seed: int = 0) -> NDArray[np.int64]:
    """Deterministic training split; ``fraction=1.0`` trains on every node."""

    if not 0.0 < fraction <= 1.0:
        raise ParameterError("train fraction must lie in (0, 1]")
    if fraction == 1.0:
        return np.arange(g.num_nodes, dtype=np.int64)
    count = max(1, int(round(g.num_nodes * fraction)))
    perm = rng.stream(seed, rng.SPLIT).permutation(g.num_nodes)
    return np.sort(perm[:count]).astype(np.int64)
