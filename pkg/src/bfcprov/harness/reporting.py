"""CSV and JSON writers for experiment runs."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

TRACE_HEADER = ("seed", "clients", "cluster", "kind", "pods", "mean_util_pct", "latency_ms",
                "overhead_ms")
SUMMARY_KEYS = ("total_placements", "violations", "mean_overhead_ms", "episodes_to_threshold")


@dataclass(frozen=True)
class TraceRow:
    seed: int
    clients: int
    cluster: int
    kind: str
    pods: int
    mean_util: float       # fraction, written as percent
    latency_ms: float
    overhead_ms: float

    def cells(self) -> list[str]:
        return [str(self.seed), str(self.clients), str(self.cluster), self.kind, str(self.pods),
                f"{self.mean_util * 100:.3f}", f"{self.latency_ms:.3f}", f"{self.overhead_ms:.3f}"]


def trace_rows(levels, clusters: Sequence[int], kinds: Sequence[str]) -> list[TraceRow]:
    """One row per (seed, client level, cluster, kind), zero-filled where nothing runs."""
    rows = []
    for lv in levels:
        for c in clusters:
            for k in kinds:
                rows.append(TraceRow(lv.seed, lv.clients, c, k, int(lv.pods.get((c, k), 0)),
                                     lv.utils.get((c, k), 0.0), lv.latency, lv.overhead))
    return rows


def emit_trace(rows: Iterable[TraceRow], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in rows:
            w.writerow(r.cells())
    return path


def emit_curve(curves: dict[int, Sequence[float]], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("seed", "episode", "reward"))
        for seed in sorted(curves):
            for i, r in enumerate(curves[seed], start=1):
                w.writerow((seed, i, f"{r:.6f}"))
    return path


def emit_summary(summary: dict, path: str | Path) -> Path:
    missing = [k for k in SUMMARY_KEYS if k not in summary]
    if missing:
        raise KeyError(f"summary lacks {missing}")
    path = Path(path)
    path.write_text(json.dumps({k: summary[k] for k in SUMMARY_KEYS}, indent=2) + "\n",
                    encoding="utf-8")
    return path


def read_trace(path: str | Path) -> list[dict]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
