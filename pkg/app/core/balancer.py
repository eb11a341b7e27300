"""Static and Dynamic load balancing across heterogeneous devices."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence

from app.core.errors import MeasurementError, ParameterError
from app.core.estimator import WorkloadEstimate
from app.core.logs import log

DEFAULT_IMBALANCE_THRESHOLD = 1.10
SHARE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class WorkloadRatio:
    shares: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.shares:
            raise ParameterError("a ratio needs at least one device")
        if any(s < 0 or math.isnan(s) for s in self.shares):
            raise ParameterError(f"shares must be non-negative, got {self.shares}")
        if abs(sum(self.shares) - 1.0) > SHARE_TOLERANCE:
            raise ParameterError(f"shares must sum to 1, got {sum(self.shares)!r}")

    @classmethod
    def from_weights(cls, weights: Sequence[float]) -> "WorkloadRatio":
        total = float(sum(weights))
        if total <= 0:
            raise ParameterError("weights must have a positive sum")
        shares = [float(w) / total for w in weights]
        # absorb rounding into the largest share so the sum is exact enough
        drift = 1.0 - sum(shares)
        top = max(range(len(shares)), key=lambda i: shares[i])
        shares[top] += drift
        return cls(tuple(shares))

    @property
    def num_devices(self) -> int:
        return len(self.shares)


def equal_ratio(num_devices: int, eligible: Sequence[bool] | None = None) -> WorkloadRatio:
    """Equal shares over the eligible devices, zero elsewhere."""

    mask = list(eligible) if eligible is not None else [True] * num_devices
    if len(mask) != num_devices or not any(mask):
        raise ParameterError("at least one eligible device is required")
    return WorkloadRatio.from_weights([1.0 if ok else 0.0 for ok in mask])


@dataclass
class Assignment:
    batches: List[List[int]]
    assigned_workload: List[int] = field(default_factory=list)

    @property
    def num_devices(self) -> int:
        return len(self.batches)

    def device_of(self) -> Dict[int, int]:
        return {b: d for d, ids in enumerate(self.batches) for b in ids}


def _largest_remainder(n: int, shares: Sequence[float]) -> List[int]:
    exact = [n * s for s in shares]
    counts = [math.floor(x) for x in exact]
    left = n - sum(counts)
    order = sorted(range(len(shares)), key=lambda i: (-(exact[i] - counts[i]), -shares[i], i))
    for i in order[:left]:
        counts[i] += 1
    return counts


def static_assign(
    batch_ids: Sequence[int],
    ratio: WorkloadRatio,
    workloads: Mapping[int, int] | None = None,
) -> Assignment:
    """Batch counts proportional to shares, dealt out in the original order."""

    counts = _largest_remainder(len(batch_ids), ratio.shares)
    out: List[List[int]] = []
    start = 0
    for c in counts:
        out.append([int(b) for b in batch_ids[start : start + c]])
        start += c
    work = [sum(workloads.get(b, 0) for b in ids) for ids in out] if workloads else [0] * len(out)
    return Assignment(out, work)


def dynamic_assign(estimates: Sequence[WorkloadEstimate], ratio: WorkloadRatio) -> Assignment:
    """Heavy-first greedy: each batch goes to the device with the most quota left.

    Quotas are ``share * total_aggregations``. Ties on remaining quota go to the
    larger quota, then the lower device id. Every device ends within one
    batch's workload of its quota. Per-device lists keep the sorted order.
    With no workload at all the batches are dealt by count, as in Static.
    """

    n = ratio.num_devices
    total = sum(e.aggregations for e in estimates)
    ordered = sorted(estimates, key=lambda e: (-e.aggregations, e.batch_id))
    if total <= 0:
        counted = static_assign([e.batch_id for e in ordered], ratio)
        return Assignment(counted.batches, [0] * n)
    quotas = [s * total for s in ratio.shares]
    remaining = list(quotas)
    out: List[List[int]] = [[] for _ in range(n)]
    work = [0] * n
    eligible = [i for i in range(n) if ratio.shares[i] > 0]
    for est in ordered:
        dev = max(eligible, key=lambda i: (remaining[i], quotas[i], -i))
        out[dev].append(est.batch_id)
        work[dev] += est.aggregations
        remaining[dev] -= est.aggregations
    return Assignment(out, work)


@dataclass(frozen=True)
class DeviceMeasurement:
    total_time: float
    processed_workload: int


def imbalance(times: Sequence[float]) -> float:
    active = [t for t in times if t > 0]
    if not active:
        return 1.0
    return max(active) / min(active)


def update_ratio(
    old: WorkloadRatio,
    profile,
    threshold: float = DEFAULT_IMBALANCE_THRESHOLD,
) -> WorkloadRatio:
    """Throughput-proportional recalculation of the shares for the next epoch.

    ``profile`` is an EpochProfile or a plain sequence of DeviceMeasurement.
    Devices that processed nothing keep their old share; the others split the
    remaining mass by measured throughput ``w_i / t_i``. Within ``threshold``
    (max/min time over active devices) the ratio is returned unchanged.
    """

    measurements: Sequence[DeviceMeasurement] = (
        profile.measurements() if hasattr(profile, "measurements") else profile
    )
    if len(measurements) != old.num_devices:
        raise MeasurementError("one measurement per device is required")
    active = [i for i, m in enumerate(measurements) if m.processed_workload > 0 or m.total_time > 0]
    for i in active:
        if measurements[i].total_time <= 0:
            raise MeasurementError(f"device {i} reports non-positive time {measurements[i].total_time}")
    if not active:
        raise MeasurementError("no device reported any work")

    times = [measurements[i].total_time for i in active]
    if max(times) / min(times) <= threshold:
        return old

    throughput = {i: measurements[i].processed_workload / measurements[i].total_time for i in active}
    mass = sum(old.shares[i] for i in active)
    t_sum = sum(throughput.values())
    if t_sum <= 0:
        # nothing to aggregate, so throughput carries no signal
        return old
    weights = [
        mass * throughput[i] / t_sum if i in throughput else old.shares[i]
        for i in range(old.num_devices)
    ]
    new = WorkloadRatio.from_weights(weights)
    log.info(
        "ratio update: %s -> %s (imbalance %.3f)",
        _fmt(old.shares),
        _fmt(new.shares),
        max(times) / min(times),
    )
    return new


def _fmt(shares: Sequence[float]) -> str:
    return "(" + ", ".join(f"{s:.4f}" for s in shares) + ")"
