"""
runtime.py — the Unified CPU-GPU protocol and the Standard baseline.

Host role: partitions seeds, estimates workloads, assigns batches, averages
gradients and applies the update, collects the epoch profile.
Device roles: sample, fetch features (through the accelerator cache), run
forward/backward and hand back a local gradient.

Training proceeds in synchronised rounds. In round r every device that still
holds a batch processes one; the round's gradients are averaged weighted by
sample count in device-id order and one optimizer step is applied. Devices
whose queue ran dry sit the round out.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Literal, Sequence

import numpy as np

from app.core.balancer import (
    DEFAULT_IMBALANCE_THRESHOLD,
    Assignment,
    DeviceMeasurement,
    WorkloadRatio,
    dynamic_assign,
    equal_ratio,
    static_assign,
    update_ratio,
)
from app.core.cache import FeatureCache, FetchStats, fetch_features
from app.core.errors import ConfigError, ContractError
from app.core.estimator import WorkloadEstimate, estimate
from app.core.logs import log, span
from app.core.simclock import DEFAULT_SAMPLE_COST, DeviceProfile, PhaseTimes, simulate_times
from app.graph.sampler import MiniBatch, SamplerConfig, partition_seeds, sample
from app.graph.store import Graph, train_ids
from app.model.gnn import Gradients, ModelKind, ModelParams, forward, init_params, loss_and_grad, weighted_mean
from app.model.optim import SGD, Adam, make_optimizer
from app.util import rng

DEFAULT_CACHE_FRACTION = 0.10


@dataclass(frozen=True)
class ProtocolConfig:
    devices: Sequence[DeviceProfile]
    protocol: Literal["standard", "unified"] = "unified"
    balancer: Literal["static", "dynamic"] = "dynamic"
    cache_enabled: bool = True
    mode: Literal["simulated", "wallclock"] = "simulated"
    epochs: int = 3
    batch_size: int = 4096
    lr: float = 0.01
    optimizer: Literal["sgd", "adam"] = "sgd"
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    model: ModelKind = "sage"
    hidden_dim: int = 128
    seed: int = 0
    imbalance_threshold: float = DEFAULT_IMBALANCE_THRESHOLD
    cache_fraction: float = DEFAULT_CACHE_FRACTION
    sample_cost_coefficient: float = DEFAULT_SAMPLE_COST
    train_fraction: float = 1.0

    def validate(self) -> None:
        if self.protocol not in ("standard", "unified"):
            raise ConfigError("protocol", f"unknown protocol {self.protocol!r}")
        if self.balancer not in ("static", "dynamic"):
            raise ConfigError("balancer", f"unknown balancer {self.balancer!r}")
        if self.mode not in ("simulated", "wallclock"):
            raise ConfigError("mode", f"unknown mode {self.mode!r}")
        if not self.devices:
            raise ConfigError("devices", "at least one device is required")
        ids = [d.device_id for d in self.devices]
        if len(set(ids)) != len(ids):
            raise ConfigError("devices", f"duplicate device ids in {ids}")
        for dev in self.devices:
            dev.validate(simulated=self.mode == "simulated")
        if self.protocol == "standard" and not any(d.kind == "accelerator" for d in self.devices):
            raise ConfigError("protocol", "standard protocol needs at least one accelerator device")
        if self.epochs < 1:
            raise ConfigError("epochs", "must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size", "must be >= 1")
        if self.hidden_dim < 1:
            raise ConfigError("hidden_dim", "must be >= 1")
        if not 0.0 <= self.cache_fraction <= 1.0:
            raise ConfigError("cache_fraction", "must lie in [0, 1]")
        if self.imbalance_threshold < 1.0:
            raise ConfigError("imbalance_threshold", "must be >= 1.0")

    @property
    def eligible(self) -> List[bool]:
        """Devices allowed to receive batches under the chosen protocol."""

        if self.protocol == "standard":
            return [d.kind == "accelerator" for d in self.devices]
        return [True] * len(self.devices)

    def layer_dims(self, graph: Graph) -> List[int]:
        depth = self.sampler.num_layers
        return [graph.feature_dim] + [self.hidden_dim] * (depth - 1) + [graph.num_classes]


@dataclass(frozen=True)
class DeviceEpochStats:
    device_id: str
    kind: str
    share: float
    num_batches: int
    sample_time: float
    fetch_time: float
    compute_time: float
    total_time: float
    processed_workload: int
    cache: FetchStats
    utilization: float = 0.0

    @property
    def cache_hit_rate(self) -> float:
        return self.cache.hit_rate


@dataclass(frozen=True)
class EpochProfile:
    epoch: int
    devices: List[DeviceEpochStats]
    loss: float
    num_rounds: int
    assignment: Assignment
    batch_edges: int = 0

    @property
    def epoch_time(self) -> float:
        return max((d.total_time for d in self.devices), default=0.0)

    @property
    def shares(self) -> tuple[float, ...]:
        return tuple(d.share for d in self.devices)

    def measurements(self) -> List[DeviceMeasurement]:
        return [DeviceMeasurement(d.total_time, d.processed_workload) for d in self.devices]


@dataclass
class RunState:
    """Per-device state that outlives an epoch: feature caches and the optimizer."""

    caches: List[FeatureCache | None]
    optimizer: SGD | Adam

    @classmethod
    def create(cls, config: ProtocolConfig, graph: Graph) -> "RunState":
        caches: List[FeatureCache | None] = []
        for dev in config.devices:
            if dev.kind != "accelerator" or not config.cache_enabled:
                caches.append(None)
                continue
            capacity = dev.cache_capacity
            if capacity is None:
                capacity = int(config.cache_fraction * graph.num_nodes)
            caches.append(FeatureCache(capacity, graph.row_bytes))
        return cls(caches=caches, optimizer=make_optimizer(config.optimizer, config.lr))


@dataclass
class StepResult:
    batch_id: int
    loss: float
    grads: Gradients
    estimate: WorkloadEstimate
    fetch: FetchStats
    times: PhaseTimes


def _device_step(
    config: ProtocolConfig,
    graph: Graph,
    params: ModelParams,
    cache: FeatureCache | None,
    seeds: np.ndarray,
    key: tuple[int, ...],
    batch_id: int,
    batch: MiniBatch | None,
    dims: Sequence[int],
) -> StepResult:
    t0 = time.perf_counter()
    if batch is None:
        batch = sample(graph, seeds, config.sampler, key, batch_id)
    t1 = time.perf_counter()
    features, fetched = fetch_features(cache, graph, batch.input_nodes)
    t2 = time.perf_counter()
    acts = forward(params, batch, features)
    loss, grads = loss_and_grad(params, acts, batch)
    t3 = time.perf_counter()
    s, f, c = t1 - t0, t2 - t1, t3 - t2
    return StepResult(
        batch_id=batch_id,
        loss=loss,
        grads=grads,
        estimate=estimate(batch, dims, params.kind),
        fetch=fetched,
        times=PhaseTimes(s, f, c, s + f + c),
    )


def _project(ratio: WorkloadRatio, eligible: Sequence[bool]) -> WorkloadRatio:
    if ratio.num_devices != len(eligible):
        raise ContractError(f"ratio covers {ratio.num_devices} devices, config has {len(eligible)}")
    if all(ok or s == 0 for s, ok in zip(ratio.shares, eligible)):
        return ratio
    kept = [s if ok else 0.0 for s, ok in zip(ratio.shares, eligible)]
    if sum(kept) <= 0:
        return equal_ratio(len(eligible), eligible)
    return WorkloadRatio.from_weights(kept)


def run_epoch(
    config: ProtocolConfig,
    graph: Graph,
    params: ModelParams,
    ratio: WorkloadRatio,
    epoch_index: int,
    state: RunState | None = None,
) -> tuple[ModelParams, EpochProfile]:
    config.validate()
    state = state or RunState.create(config, graph)
    devices = list(config.devices)
    dims = config.layer_dims(graph)
    simulated = config.mode == "simulated"
    ratio = _project(ratio, config.eligible)

    # 1) partition
    with span(f"epoch {epoch_index}: partition", level=logging.DEBUG):
        ids = train_ids(graph, config.train_fraction, config.seed)
        chunks = partition_seeds(ids, config.batch_size, (config.seed, epoch_index))
        keys = [(config.seed, rng.SAMPLE, epoch_index, b) for b in range(len(chunks))]

    # 2) sample + estimate (host pre-processing)
    batches: Dict[int, MiniBatch] = {}
    estimates: Dict[int, WorkloadEstimate] = {}
    if simulated or config.balancer == "dynamic":
        with span(f"epoch {epoch_index}: sample+estimate", level=logging.DEBUG):
            for b, seeds in enumerate(chunks):
                batches[b] = sample(graph, seeds, config.sampler, keys[b], b)
                estimates[b] = estimate(batches[b], dims, params.kind)

    # 3) assign
    batch_ids = list(range(len(chunks)))
    if config.balancer == "dynamic":
        assignment = dynamic_assign([estimates[b] for b in batch_ids], ratio)
    else:
        workloads = {b: e.aggregations for b, e in estimates.items()}
        assignment = static_assign(batch_ids, ratio, workloads)

    # 4) synchronised rounds
    results: List[List[StepResult]] = [[] for _ in devices]
    num_rounds = max((len(q) for q in assignment.batches), default=0)
    executors = (
        [ThreadPoolExecutor(max_workers=1, thread_name_prefix=d.device_id) for d in devices]
        if not simulated
        else []
    )
    try:
        with span(f"epoch {epoch_index}: {num_rounds} rounds"):
            for r in range(num_rounds):
                active = [d for d, q in enumerate(assignment.batches) if r < len(q)]
                jobs = []
                for d in active:
                    b = assignment.batches[d][r]
                    args = (config, graph, params, state.caches[d], chunks[b], keys[b], b,
                            None if not simulated else batches[b], dims)
                    jobs.append(executors[d].submit(_device_step, *args) if executors else args)
                # barrier: gather in device-id order
                round_results = [j.result() if executors else _device_step(*j) for j in jobs]
                for d, res in zip(active, round_results):
                    results[d].append(res)
                mean = weighted_mean([res.grads for res in round_results])
                params = state.optimizer.step(params, mean)
                log.debug(f"round {r}: devices={active} samples={mean.sample_count}")
    finally:
        for ex in executors:
            ex.shutdown(wait=True)

    # 5) profile
    fetch_per_device = []
    for res_list in results:
        total = FetchStats()
        for res in res_list:
            total.add(res.fetch)
        fetch_per_device.append(total)
    if simulated:
        times = simulate_times(
            assignment,
            estimates,
            devices,
            fetch_per_device,
            config.sample_cost_coefficient,
            serial=config.protocol == "standard",
        )
    else:
        times = []
        for dev, res_list in zip(devices, results):
            s = sum(r.times.sample_time for r in res_list) * dev.time_scale
            f = sum(r.times.fetch_time for r in res_list) * dev.time_scale
            c = sum(r.times.compute_time for r in res_list) * dev.time_scale
            times.append(PhaseTimes(s, f, c, s + f + c))

    epoch_time = max((t.total_time for t in times), default=0.0)
    seen = sum(r.grads.sample_count for res_list in results for r in res_list)
    loss = (
        sum(r.loss * r.grads.sample_count for res_list in results for r in res_list) / seen
        if seen
        else 0.0
    )
    stats = [
        DeviceEpochStats(
            device_id=dev.device_id,
            kind=dev.kind,
            share=ratio.shares[d],
            num_batches=len(results[d]),
            sample_time=times[d].sample_time,
            fetch_time=times[d].fetch_time,
            compute_time=times[d].compute_time,
            total_time=times[d].total_time,
            processed_workload=sum(r.estimate.aggregations for r in results[d]),
            cache=fetch_per_device[d],
            utilization=times[d].total_time / epoch_time if epoch_time > 0 else 0.0,
        )
        for d, dev in enumerate(devices)
    ]
    profile = EpochProfile(
        epoch=epoch_index,
        devices=stats,
        loss=loss,
        num_rounds=num_rounds,
        batch_edges=sum(r.estimate.num_edges for res_list in results for r in res_list),
        assignment=replace(
            assignment,
            assigned_workload=[s.processed_workload for s in stats],
        ),
    )
    log.info(
        f"epoch {epoch_index} [{config.protocol}/{config.balancer}] loss={loss:.4f} "
        f"time={profile.epoch_time:.4f}s rounds={num_rounds}"
    )
    return params, profile


def train(config: ProtocolConfig, graph: Graph) -> tuple[ModelParams, List[EpochProfile]]:
    """Calibrate at equal shares in epoch 0, then rebalance before each epoch."""

    config.validate()
    params = init_params(config.model, config.layer_dims(graph), config.seed)
    state = RunState.create(config, graph)
    ratio = equal_ratio(len(config.devices), config.eligible)
    profiles: List[EpochProfile] = []
    with span(f"train {config.protocol}/{config.balancer} epochs={config.epochs}"):
        for epoch in range(config.epochs):
            params, profile = run_epoch(config, graph, params, ratio, epoch, state)
            profiles.append(profile)
            if epoch + 1 < config.epochs:
                ratio = update_ratio(ratio, profile, config.imbalance_threshold)
    return params, profiles
