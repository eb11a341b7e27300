"""
config.py — effective experiment configuration.

Sources, lowest precedence first: config/defaults.yaml, the --config file
(JSON or YAML), command-line flags. The merged tree is checked against
config/schemas/experiment.schema.json; any violation becomes a ConfigError
naming the offending key.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Tuple

import yaml
from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from app.core.errors import ConfigError, EngineError
from app.core.runtime import ProtocolConfig
from app.core.simclock import DeviceProfile
from app.graph.sampler import SamplerConfig
from app.graph.store import Graph, generate_synthetic, load_edge_list

CONFIG_DIR = Path(__file__).resolve().parents[2] / "config"
_SCHEMA = json.loads((CONFIG_DIR / "schemas" / "experiment.schema.json").read_text(encoding="utf-8"))
_VALIDATOR = Draft202012Validator(_SCHEMA)

DEVICE_FIELDS = (
    "device_id",
    "kind",
    "agg_throughput",
    "flop_throughput",
    "fetch_bandwidth",
    "processes",
    "cache_capacity",
    "time_scale",
)


def _load_yaml(path: Path) -> Dict[str, Any]:
    return yaml.safe_load(path.read_text(encoding="utf-8")) or {}


def _deep_merge(base: Dict[str, Any], over: Mapping[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in over.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _check_schema(data: Mapping[str, Any]) -> None:
    error = best_match(_VALIDATOR.iter_errors(data))
    if error is None:
        return
    path = [str(p) for p in error.absolute_path]
    if error.validator == "additionalProperties" and isinstance(error.instance, Mapping):
        allowed = set(error.schema.get("properties", {}))
        extras = sorted(k for k in error.instance if k not in allowed)
        if extras:
            raise ConfigError(".".join(path + [extras[0]]), "unknown key")
    raise ConfigError(".".join(path) or "config", error.message)


def load_platforms() -> Dict[str, List[Dict[str, Any]]]:
    return _load_yaml(CONFIG_DIR / "platforms.yaml")


def _device(raw: Mapping[str, Any]) -> DeviceProfile:
    cap = raw.get("cache_capacity")
    return DeviceProfile(
        device_id=str(raw["device_id"]),
        kind=raw["kind"],
        agg_throughput=float(raw["agg_throughput"]),
        flop_throughput=float(raw["flop_throughput"]),
        fetch_bandwidth=float(raw["fetch_bandwidth"]),
        processes=int(raw.get("processes", 1)),
        cache_capacity=None if cap is None else int(cap),
        time_scale=float(raw.get("time_scale", 1.0)),
    )


def _parse_synthetic(text: str) -> Tuple[str, int, int]:
    try:
        kind, n, deg = text.split(":")
        return kind, int(n), int(deg)
    except ValueError as e:
        raise ConfigError("dataset.synthetic", f"expected kind:n:deg, got {text!r}") from e


@dataclass(frozen=True)
class ExperimentSpec:
    devices: Tuple[DeviceProfile, ...]
    dataset_path: str | None = None
    synthetic: str | None = None
    num_nodes: int | None = None
    num_features: int = 32
    num_classes: int = 8
    feature_path: str | None = None
    labels_path: str | None = None
    protocol: Literal["standard", "unified", "both"] = "unified"
    balancer: Literal["static", "dynamic"] = "dynamic"
    cache: bool = True
    mode: Literal["simulated", "wallclock"] = "simulated"
    epochs: int = 3
    batch_size: int = 4096
    lr: float = 0.01
    optimizer: Literal["sgd", "adam"] = "sgd"
    seed: int = 0
    repetitions: int = 1
    out: str = "runs/latest"
    ablation: bool = False
    sampler: str = "neighbor"
    fanouts: Tuple[int, ...] = (15, 10, 5)
    model_depth: int = 5
    model: str = "sage"
    hidden_dim: int = 128
    imbalance_threshold: float = 1.10
    cache_fraction: float = 0.10
    sample_cost_coefficient: float = 0.1
    train_fraction: float = 1.0
    platform: str | None = None

    def validate(self) -> None:
        if (self.dataset_path is None) == (self.synthetic is None):
            raise ConfigError("dataset", "exactly one of dataset path or synthetic spec is required")
        if self.synthetic is not None:
            _parse_synthetic(self.synthetic)
        if self.repetitions < 1:
            raise ConfigError("repetitions", "must be >= 1")
        for _, cfg in self.runs():
            cfg.validate()

    def protocol_config(self, protocol: str, balancer: str | None = None, cache: bool | None = None) -> ProtocolConfig:
        try:
            sampler = SamplerConfig(
                kind=self.sampler,
                fanouts=list(self.fanouts),
                model_depth=self.model_depth,
                seed=self.seed,
            )
        except EngineError as e:
            raise ConfigError("sampler", str(e)) from e
        return ProtocolConfig(
            devices=list(self.devices),
            protocol=protocol,
            balancer=balancer or self.balancer,
            cache_enabled=self.cache if cache is None else cache,
            mode=self.mode,
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            optimizer=self.optimizer,
            sampler=sampler,
            model=self.model,
            hidden_dim=self.hidden_dim,
            seed=self.seed,
            imbalance_threshold=self.imbalance_threshold,
            cache_fraction=self.cache_fraction,
            sample_cost_coefficient=self.sample_cost_coefficient,
            train_fraction=self.train_fraction,
        )

    def runs(self) -> List[Tuple[str, ProtocolConfig]]:
        """Named protocol runs this experiment performs, baseline first."""

        if self.ablation:
            return [
                ("standard", self.protocol_config("standard", "static", False)),
                ("unified+static", self.protocol_config("unified", "static", False)),
                ("unified+dynamic", self.protocol_config("unified", "dynamic", False)),
                ("unified+dynamic+cache", self.protocol_config("unified", "dynamic", True)),
            ]
        if self.protocol == "both":
            return [
                ("standard", self.protocol_config("standard")),
                ("unified", self.protocol_config("unified")),
            ]
        return [(self.protocol, self.protocol_config(self.protocol))]

    def load_graph(self) -> Graph:
        if self.synthetic is not None:
            kind, n, deg = _parse_synthetic(self.synthetic)
            return generate_synthetic(kind, n, deg, self.num_features, self.num_classes, self.seed)
        return load_edge_list(
            self.dataset_path,
            self.num_features,
            self.num_classes,
            self.seed,
            num_nodes=self.num_nodes,
            feature_path=self.feature_path,
            labels_path=self.labels_path,
        )

    def to_dict(self) -> Dict[str, Any]:
        """Effective config in the file layout; parse_config reads it back unchanged."""

        return {
            "protocol": self.protocol,
            "balancer": self.balancer,
            "cache": self.cache,
            "mode": self.mode,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "optimizer": self.optimizer,
            "seed": self.seed,
            "repetitions": self.repetitions,
            "out": self.out,
            "ablation": self.ablation,
            "sampler": {"kind": self.sampler, "fanouts": list(self.fanouts), "model_depth": self.model_depth},
            "model": {"kind": self.model, "hidden_dim": self.hidden_dim},
            "balance": {"imbalance_threshold": self.imbalance_threshold},
            "cache_fraction": self.cache_fraction,
            "sample_cost_coefficient": self.sample_cost_coefficient,
            "train_fraction": self.train_fraction,
            "dataset": {
                "path": self.dataset_path,
                "synthetic": self.synthetic,
                "num_nodes": self.num_nodes,
                "num_features": self.num_features,
                "num_classes": self.num_classes,
                "feature_path": self.feature_path,
                "labels_path": self.labels_path,
            },
            "platform": self.platform,
            "devices": [{name: getattr(d, name) for name in DEVICE_FIELDS} for d in self.devices],
        }


def _spec_from_tree(data: Mapping[str, Any]) -> ExperimentSpec:
    dataset = data.get("dataset") or {}
    sampler = data.get("sampler") or {}
    model = data.get("model") or {}
    balance = data.get("balance") or {}

    platform = data.get("platform")
    raw_devices = data.get("devices")
    if raw_devices is None:
        presets = load_platforms()
        if platform not in presets:
            raise ConfigError("platform", f"unknown platform {platform!r}; known: {sorted(presets)}")
        raw_devices = presets[platform]

    return ExperimentSpec(
        devices=tuple(_device(d) for d in raw_devices),
        dataset_path=dataset.get("path"),
        synthetic=dataset.get("synthetic"),
        num_nodes=dataset.get("num_nodes"),
        num_features=int(dataset.get("num_features", 32)),
        num_classes=int(dataset.get("num_classes", 8)),
        feature_path=dataset.get("feature_path"),
        labels_path=dataset.get("labels_path"),
        protocol=data["protocol"],
        balancer=data["balancer"],
        cache=bool(data["cache"]),
        mode=data["mode"],
        epochs=int(data["epochs"]),
        batch_size=int(data["batch_size"]),
        lr=float(data["lr"]),
        optimizer=data["optimizer"],
        seed=int(data["seed"]),
        repetitions=int(data["repetitions"]),
        out=str(data["out"]),
        ablation=bool(data["ablation"]),
        sampler=sampler["kind"],
        fanouts=tuple(int(f) for f in sampler["fanouts"]),
        model_depth=int(sampler["model_depth"]),
        model=model["kind"],
        hidden_dim=int(model["hidden_dim"]),
        imbalance_threshold=float(balance["imbalance_threshold"]),
        cache_fraction=float(data["cache_fraction"]),
        sample_cost_coefficient=float(data["sample_cost_coefficient"]),
        train_fraction=float(data["train_fraction"]),
        platform=platform,
    )


def parse_config(path: str | Path | None = None, flags: Mapping[str, Any] | None = None) -> ExperimentSpec:
    """Merge defaults, the optional file and flag overrides into a validated spec.

    ``flags`` uses the file layout (nested ``sampler``/``model``/``dataset``
    sections). A dataset source given in the flags replaces the file's source;
    two sources inside one layer are a conflict.
    """

    tree = _load_yaml(CONFIG_DIR / "defaults.yaml")
    layers: List[Mapping[str, Any]] = []
    if path is not None:
        loaded = _load_yaml(Path(path))
        if not isinstance(loaded, Mapping):
            raise ConfigError("config", f"{path} must hold a mapping")
        layers.append(loaded)
    if flags:
        layers.append(flags)

    for layer in layers:
        _check_schema(layer)
        ds = layer.get("dataset") or {}
        if ds.get("path") is not None and ds.get("synthetic") is not None:
            raise ConfigError("dataset", "both a dataset path and a synthetic spec were given")
        if ds.get("path") is not None or ds.get("synthetic") is not None:
            tree.setdefault("dataset", {}).update({"path": None, "synthetic": None})
        tree = _deep_merge(tree, layer)
    _check_schema(tree)

    spec = _spec_from_tree(tree)
    spec.validate()
    return spec


def with_overrides(spec: ExperimentSpec, **changes: Any) -> ExperimentSpec:
    out = replace(spec, **changes)
    out.validate()
    return out
