"""Unified/Standard speedup across host:accelerator throughput ratios.

    python -m scripts.trend --synthetic uniform:4000:10 --epochs 4

The host's aggregation and FLOP throughput are set to 1/k of the first
accelerator's for every k in the sweep; everything else comes from the
experiment config. Speedup compares the last epoch of each run, after the
balancer has settled.
"""

from __future__ import annotations

import argparse
import json
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Sequence

from app.core.errors import ConfigError
from app.core.runtime import train
from app.graph.store import Graph
from app.io.config import ExperimentSpec, parse_config

RATIOS = (8, 4, 2)


def sweep(spec: ExperimentSpec, ratios: Sequence[int] = RATIOS, graph: Graph | None = None) -> List[Dict[str, Any]]:
    hosts = [d for d in spec.devices if d.kind == "host"]
    accels = [d for d in spec.devices if d.kind == "accelerator"]
    if not hosts or not accels:
        raise ConfigError("devices", "the sweep needs one host and at least one accelerator")
    graph = graph or spec.load_graph()
    ref = accels[0]

    rows = []
    for k in ratios:
        host = replace(
            hosts[0],
            agg_throughput=ref.agg_throughput / k,
            flop_throughput=ref.flop_throughput / k,
        )
        point = replace(spec, devices=(host, *accels), protocol="both", ablation=False)
        point.validate()
        times = {}
        for name, cfg in point.runs():
            _, profiles = train(cfg, graph)
            times[name] = profiles[-1].epoch_time
        rows.append(
            {
                "ratio": f"1:{k}",
                "standard": times["standard"],
                "unified": times["unified"],
                "speedup": times["standard"] / times["unified"],
            }
        )
    return rows


def main(argv: Sequence[str] | None = None) -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", type=str, default=None)
    ap.add_argument("--synthetic", type=str, default="uniform:4000:10")
    ap.add_argument("--epochs", type=int, default=4)
    ap.add_argument("--batch-size", type=int, default=64)
    ap.add_argument("--out", type=str, default="runs/trend")
    args = ap.parse_args(argv)

    flags = {"epochs": args.epochs, "batch_size": args.batch_size, "out": args.out}
    if args.config is None:
        flags["dataset"] = {"synthetic": args.synthetic}
    spec = parse_config(args.config, flags)
    rows = sweep(spec)

    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trend.json").write_text(json.dumps(rows, indent=2), encoding="utf-8")
    for row in rows:
        print(
            "ratio={}  standard={:.4f}s  unified={:.4f}s  speedup={:.3f}".format(
                row["ratio"], row["standard"], row["unified"], row["speedup"]
            )
        )


if __name__ == "__main__":
    main()
