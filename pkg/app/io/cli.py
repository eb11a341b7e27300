"""
cli.py — experiment driver.

    python -m app.io.cli --synthetic power_law:20000:15 --protocol both --epochs 5

Writes into --out:
  epochs_<run>_rep<k>.csv  per-epoch, per-device metrics (see metrics.EPOCH_COLUMNS)
  summary.json             per-run totals, convergence epoch, speedup when both protocols ran
  config.json              effective configuration, accepted back by --config
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Sequence

from app.core.errors import EngineError
from app.core.logs import log, span
from app.core.runtime import train
from app.io.config import ExperimentSpec, parse_config
from app.io.metrics import run_summary, write_epoch_csv, write_summary


def _fanouts(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, got {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hgs", description="Heterogeneous mini-batch GNN training experiments")
    ap.add_argument("--config", type=str, default=None, help="JSON/YAML experiment file")
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--dataset", type=str, default=None, help="edge list path")
    src.add_argument("--synthetic", type=str, default=None, help="kind:n:deg, kind in uniform|power_law")
    ap.add_argument("--num-nodes", type=int, default=None)
    ap.add_argument("--num-features", type=int, default=None)
    ap.add_argument("--num-classes", type=int, default=None)
    ap.add_argument("--features", type=str, default=None, help="float32 LE feature file")
    ap.add_argument("--labels", type=str, default=None, help="one label per line")
    ap.add_argument("--sampler", choices=["neighbor", "shadow"], default=None)
    ap.add_argument("--fanouts", type=_fanouts, default=None, help="input-layer-first, e.g. 15,10,5")
    ap.add_argument("--model-depth", type=int, default=None)
    ap.add_argument("--model", choices=["gcn", "sage"], default=None)
    ap.add_argument("--hidden", type=int, default=None)
    ap.add_argument("--protocol", choices=["standard", "unified", "both"], default=None)
    ap.add_argument("--balancer", choices=["static", "dynamic"], default=None)
    ap.add_argument("--cache", choices=["on", "off"], default=None)
    ap.add_argument("--mode", choices=["simulated", "wallclock"], default=None)
    ap.add_argument("--epochs", type=int, default=None)
    ap.add_argument("--batch-size", type=int, default=None)
    ap.add_argument("--lr", type=float, default=None)
    ap.add_argument("--optimizer", choices=["sgd", "adam"], default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--platform", type=str, default=None)
    ap.add_argument("--repetitions", type=int, default=None)
    ap.add_argument("--ablation", action="store_true", default=None)
    ap.add_argument("--out", type=str, default=None)
    return ap


def flags_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    """Only the flags actually given, in the config file layout."""

    flags: Dict[str, Any] = {}
    sections: Dict[str, Dict[str, Any]] = {"dataset": {}, "sampler": {}, "model": {}}
    plain = {
        "protocol": args.protocol,
        "balancer": args.balancer,
        "mode": args.mode,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "lr": args.lr,
        "optimizer": args.optimizer,
        "seed": args.seed,
        "platform": args.platform,
        "repetitions": args.repetitions,
        "ablation": args.ablation,
        "out": args.out,
        "cache": None if args.cache is None else args.cache == "on",
    }
    nested = {
        ("dataset", "path"): args.dataset,
        ("dataset", "synthetic"): args.synthetic,
        ("dataset", "num_nodes"): args.num_nodes,
        ("dataset", "num_features"): args.num_features,
        ("dataset", "num_classes"): args.num_classes,
        ("dataset", "feature_path"): args.features,
        ("dataset", "labels_path"): args.labels,
        ("sampler", "kind"): args.sampler,
        ("sampler", "fanouts"): args.fanouts,
        ("sampler", "model_depth"): args.model_depth,
        ("model", "kind"): args.model,
        ("model", "hidden_dim"): args.hidden,
    }
    flags.update({k: v for k, v in plain.items() if v is not None})
    for (section, key), value in nested.items():
        if value is not None:
            sections[section][key] = value
    flags.update({k: v for k, v in sections.items() if v})
    if args.platform is not None:
        flags["devices"] = None
    return flags


def run_experiment(spec: ExperimentSpec) -> Dict[str, Any]:
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(spec.to_dict(), indent=2), encoding="utf-8")

    graph = spec.load_graph()
    runs = spec.runs()
    summaries: List[Dict[str, Any]] = []
    for rep in range(spec.repetitions):
        for name, cfg in runs:
            with span(f"run {name} rep={rep}"):
                _, profiles = train(cfg, graph)
            write_epoch_csv(out / f"epochs_{name}_rep{rep}.csv", profiles)
            summaries.append({**run_summary(name, profiles), "repetition": rep})

    summary: Dict[str, Any] = {"runs": summaries}
    names = [name for name, _ in runs]
    totals = {
        name: sum(s["total_time"] for s in summaries if s["run"] == name) / spec.repetitions
        for name in names
    }
    if "standard" in totals and len(names) > 1:
        base = totals["standard"]
        best = totals[names[-1]]
        summary["speedup"] = base / best if best > 0 else None
        if spec.ablation:
            summary["ablation"] = [
                {"step": name, "total_time": totals[name], "speedup": base / totals[name] if totals[name] > 0 else None}
                for name in names
            ]
    write_summary(out / "summary.json", summary)
    log.info(f"experiment written to {out}")
    return summary


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = parse_config(args.config, flags_from_args(args))
        summary = run_experiment(spec)
    except EngineError as e:
        log.error(f"config/engine error: {e}")
        return 2
    except OSError as e:
        log.error(f"I/O error: {e}")
        return 3
    if summary.get("speedup") is not None:
        print(f"speedup={summary['speedup']:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
