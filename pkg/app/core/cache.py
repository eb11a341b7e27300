"""Per-accelerator LRU cache of node feature rows."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from app.core.errors import NodeRangeError, ParameterError
from app.graph.store import Graph


@dataclass
class FetchStats:
    hits: int = 0
    misses: int = 0
    bytes_transferred: int = 0

    @property
    def accesses(self) -> int:
        return self.hits + self.misses

    @property
    def hit_rate(self) -> float:
        return self.hits / self.accesses if self.accesses else 0.0

    def add(self, other: "FetchStats") -> None:
        self.hits += other.hits
        self.misses += other.misses
        self.bytes_transferred += other.bytes_transferred

    def copy(self) -> "FetchStats":
        return FetchStats(self.hits, self.misses, self.bytes_transferred)


class FeatureCache:
    """Fixed-capacity LRU over node ids; one instance per accelerator.

    Capacity 0 disables caching: every access misses and nothing is stored.
    """

    def __init__(self, capacity: int, row_bytes: int) -> None:
        if capacity < 0:
            raise ParameterError("cache capacity must be >= 0")
        self.capacity = int(capacity)
        self.row_bytes = int(row_bytes)
        self.entries: OrderedDict[int, NDArray[np.float32]] = OrderedDict()
        self.stats = FetchStats()

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, node: int) -> bool:
        return node in self.entries

    def recency(self) -> list[int]:
        """Cached ids from least to most recently used."""

        return list(self.entries)

    def lookup(self, node: int) -> NDArray[np.float32] | None:
        row = self.entries.get(node)
        if row is not None:
            self.entries.move_to_end(node)
        return row

    def insert(self, node: int, row: NDArray[np.float32]) -> None:
        if self.capacity == 0:
            return
        if node in self.entries:
            self.entries.move_to_end(node)
            return
        if len(self.entries) >= self.capacity:
            self.entries.popitem(last=False)
        self.entries[node] = row

    def fetch(self, g: Graph, input_nodes: Sequence[int] | NDArray[np.int64]):
        return fetch_features(self, g, input_nodes)

    def reset_stats(self) -> None:
        self.stats = FetchStats()


def fetch_features(
    cache: FeatureCache | None,
    g: Graph,
    input_nodes: Sequence[int] | NDArray[np.int64],
) -> tuple[NDArray[np.float32], FetchStats]:
    """Gather feature rows for ``input_nodes`` in order.

    ``cache=None`` is the host path: every row is read from host memory and
    counted as transferred bytes.
    """

    ids = np.asarray(input_nodes, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= g.num_nodes):
        raise NodeRangeError(f"input node out of range [0, {g.num_nodes})")
    out = np.empty((ids.size, g.feature_dim), dtype=np.float32)
    delta = FetchStats()
    row_bytes = g.row_bytes
    if cache is None:
        out[:] = g.features[ids]
        delta.misses = int(ids.size)
        delta.bytes_transferred = int(ids.size) * row_bytes
        return out, delta

    for i, node in enumerate(ids.tolist()):
        row = cache.lookup(node)
        if row is not None:
            delta.hits += 1
        else:
            row = g.features[node]
            delta.misses += 1
            delta.bytes_transferred += row_bytes
            cache.insert(node, row)
        out[i] = row
    cache.stats.add(delta)
    return out, delta
