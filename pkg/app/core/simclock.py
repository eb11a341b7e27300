"""Simulated per-device clock for one epoch.

Each device serialises sample → fetch → compute when it runs a single training
process. With two or more processes, fetching of one batch hides behind the
computation of another, so only the longer of the two counts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Mapping, Sequence

from app.core.balancer import Assignment
from app.core.cache import FetchStats
from app.core.errors import ConfigError
from app.core.estimator import WorkloadEstimate

DEFAULT_SAMPLE_COST = 0.1


@dataclass(frozen=True)
class DeviceProfile:
    device_id: str
    kind: Literal["host", "accelerator"]
    agg_throughput: float
    flop_throughput: float
    fetch_bandwidth: float
    processes: int = 1
    cache_capacity: int | None = None
    time_scale: float = 1.0

    def validate(self, simulated: bool = True) -> None:
        key = f"devices.{self.device_id}"
        if self.kind not in ("host", "accelerator"):
            raise ConfigError(f"{key}.kind", f"unknown device kind {self.kind!r}")
        if self.processes < 1:
            raise ConfigError(f"{key}.processes", "must be >= 1")
        if self.cache_capacity is not None and self.cache_capacity < 0:
            raise ConfigError(f"{key}.cache_capacity", "must be >= 0")
        if self.time_scale <= 0:
            raise ConfigError(f"{key}.time_scale", "must be > 0")
        if simulated:
            for name in ("agg_throughput", "flop_throughput", "fetch_bandwidth"):
                if getattr(self, name) <= 0:
                    raise ConfigError(f"{key}.{name}", "must be > 0 in simulated mode")


@dataclass(frozen=True)
class PhaseTimes:
    sample_time: float = 0.0
    fetch_time: float = 0.0
    compute_time: float = 0.0
    total_time: float = 0.0


def combine(sample: float, fetch: float, compute: float, processes: int) -> float:
    if processes >= 2:
        return max(compute, fetch) + sample
    return sample + fetch + compute


def simulate_times(
    assignment: Assignment,
    estimates: Mapping[int, WorkloadEstimate] | Sequence[WorkloadEstimate],
    device_profiles: Sequence[DeviceProfile],
    cache_stats: Sequence[FetchStats],
    sample_cost_coefficient: float = DEFAULT_SAMPLE_COST,
    serial: bool = False,
) -> list[PhaseTimes]:
    """Price an assignment on the device cost model.

    ``cache_stats[i].bytes_transferred`` holds what device ``i`` pulled over its
    fetch path this epoch. ``serial=True`` prices every device as a single
    process (no overlap).
    """

    by_id = estimates if isinstance(estimates, Mapping) else {e.batch_id: e for e in estimates}
    out: list[PhaseTimes] = []
    for dev, batch_ids, stats in zip(device_profiles, assignment.batches, cache_stats):
        if not batch_ids:
            out.append(PhaseTimes())
            continue
        aggregations = sum(by_id[b].aggregations for b in batch_ids)
        flops = sum(by_id[b].flops for b in batch_ids)
        sample = aggregations * sample_cost_coefficient / dev.agg_throughput
        fetch = stats.bytes_transferred / dev.fetch_bandwidth
        compute = flops / dev.flop_throughput
        processes = 1 if serial else dev.processes
        out.append(PhaseTimes(sample, fetch, compute, combine(sample, fetch, compute, processes)))
    return out
