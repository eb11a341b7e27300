"""Per-epoch CSV and run summary JSON writers."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Dict, List, Sequence

from app.core.runtime import EpochProfile

EPOCH_COLUMNS = (
    "epoch",
    "device_id",
    "kind",
    "sample_time",
    "fetch_time",
    "compute_time",
    "total_time",
    "processed_workload",
    "num_batches",
    "cache_hit_rate",
    "utilization",
    "loss",
    "shares",
)


def epoch_rows(profiles: Sequence[EpochProfile]) -> List[Dict[str, Any]]:
    rows = []
    for p in profiles:
        shares = ";".join(repr(s) for s in p.shares)
        for d in p.devices:
            rows.append(
                {
                    "epoch": p.epoch,
                    "device_id": d.device_id,
                    "kind": d.kind,
                    "sample_time": d.sample_time,
                    "fetch_time": d.fetch_time,
                    "compute_time": d.compute_time,
                    "total_time": d.total_time,
                    "processed_workload": d.processed_workload,
                    "num_batches": d.num_batches,
                    "cache_hit_rate": d.cache_hit_rate,
                    "utilization": d.utilization,
                    "loss": p.loss,
                    "shares": shares,
                }
            )
    return rows


def write_epoch_csv(path: str | Path, profiles: Sequence[EpochProfile]) -> Path:
    """One row per (epoch, device); the header is written even for no epochs."""

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=EPOCH_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(epoch_rows(profiles))
    return path


def convergence_epoch(profiles: Sequence[EpochProfile]) -> int | None:
    """First epoch from which the workload ratio never changes again."""

    if not profiles:
        return None
    last = profiles[-1].shares
    epoch = profiles[-1].epoch
    for p in reversed(profiles):
        if p.shares != last:
            break
        epoch = p.epoch
    return epoch


def run_summary(name: str, profiles: Sequence[EpochProfile]) -> Dict[str, Any]:
    total = sum(p.epoch_time for p in profiles)
    return {
        "run": name,
        "epochs": len(profiles),
        "total_time": total,
        "epoch_times": [p.epoch_time for p in profiles],
        "final_loss": profiles[-1].loss if profiles else None,
        "convergence_epoch": convergence_epoch(profiles),
        "final_shares": list(profiles[-1].shares) if profiles else [],
        "breakdown": {
            "sample_time": sum(d.sample_time for p in profiles for d in p.devices),
            "fetch_time": sum(d.fetch_time for p in profiles for d in p.devices),
            "compute_time": sum(d.compute_time for p in profiles for d in p.devices),
        },
        "batch_edges": sum(p.batch_edges for p in profiles),
        "cache_hit_rate": {
            d.device_id: d.cache_hit_rate for d in profiles[-1].devices
        } if profiles else {},
    }


def write_summary(path: str | Path, summary: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, ensure_ascii=False, indent=2), encoding="utf-8")
    return path
