"""Keyed counter-based random streams.

Every consumer asks for a stream by an integer key path, e.g.
``stream(seed, SAMPLE, epoch, batch_id, layer)``. Streams are Philox generators
seeded through ``SeedSequence`` spawn keys, so the numbers a batch sees never
depend on which worker ran it or in which order.
"""

from __future__ import annotations

from typing import Iterable, Tuple, Union

import numpy as np

# top-level stream families
GRAPH = 1
MODEL = 2
SHUFFLE = 3
SAMPLE = 4
SPLIT = 5

Key = Union[int, Tuple[int, ...]]


def _flatten(parts: Iterable[Key]) -> Tuple[int, ...]:
    out: list[int] = []
    for part in parts:
        if isinstance(part, tuple):
            out.extend(int(p) for p in part)
        else:
            out.append(int(part))
    return tuple(out)


def stream(seed: Key, *path: Key) -> np.random.Generator:
    key = _flatten((seed, *path))
    if any(k < 0 for k in key):
        raise ValueError(f"stream keys must be non-negative, got {key}")
    seq = np.random.SeedSequence(entropy=key[0], spawn_key=key[1:])
    return np.random.Generator(np.random.Philox(seq))


def derive(seed: Key, *path: Key) -> int:
    """Collapse a key path into a single 63-bit integer seed."""

    return int(stream(seed, *path).integers(0, 2**63 - 1))
