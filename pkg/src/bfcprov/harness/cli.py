"""Command line entry point: ``bfcprov run --scenario ehr --agent heuristic ...``."""
from __future__ import annotations

import argparse
import sys

from .experiment import AGENTS, ExperimentConfig, run_experiment
from .scenarios import parse_override


def _seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bfcprov", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="train and/or evaluate one agent on one scenario")
    run.add_argument("--scenario", required=True, help="ehr, ml-share, streaming or a YAML path")
    run.add_argument("--agent", required=True, choices=AGENTS)
    run.add_argument("--episodes", type=int, default=0, help="training episodes (dql, hdql)")
    run.add_argument("--seeds", type=_seeds, default=[0], help="comma-separated, e.g. 0,1,2")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                     help="scenario or agent setting, repeatable (e.g. alpha=0.5, T=30, gamma=0.95)")
    return p


def main(argv: list[str] | None = None) -> int:
    args = parser().parse_args(argv)
    try:
        overrides = dict(parse_override(o) for o in args.override)
        cfg = ExperimentConfig(args.scenario, args.agent, args.episodes, args.seeds, args.out,
                               overrides)
        report = run_experiment(cfg)
    except Exception as err:  # any module error becomes a diagnostic and a nonzero exit
        print(f"bfcprov: error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    s = report.summary
    print(f"wrote {report.out}/trace.csv, summary.json"
          + (", curve.csv" if report.curves else "")
          + f" | placements={s['total_placements']} violations={s['violations']}"
          f" mean_overhead_ms={s['mean_overhead_ms']:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
