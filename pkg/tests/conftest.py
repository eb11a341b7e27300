import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from app.graph.store import generate_synthetic  # noqa: E402
from tests.oracles import graph_from_pairs, make_device  # noqa: E402


@pytest.fixture
def small_graph():
    return generate_synthetic("uniform", 200, 4, 8, 4, seed=3)


@pytest.fixture
def tiny_graph():
    """12 nodes, about a third of all ordered pairs connected."""

    rng = np.random.default_rng(11)
    pairs = [(u, v) for u in range(12) for v in range(12) if u != v and rng.random() < 0.3]
    return graph_from_pairs(pairs, 12, num_features=3, num_classes=3, seed=11)


@pytest.fixture
def two_devices():
    return [
        make_device("cpu0", "host", agg=1.0e6, flops=1.0e8, bw=1.0e12),
        make_device("gpu0", "accelerator", agg=2.0e6, flops=2.0e8, bw=1.0e12),
    ]
