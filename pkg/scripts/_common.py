"""Shared argument handling for the experiment scripts."""

import argparse
import os

from pfdist.experiments import ExperimentConfig, emit, run_experiment


def parse(experiment: str, default_out: str, builder: bool = False) -> argparse.Namespace:
    ap = argparse.ArgumentParser(description=f"run the {experiment} study")
    if builder:
        ap.add_argument("--builder", default="empirical", help="empirical | kernel:<h>")
    ap.add_argument("--out", default=default_out)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trials", type=int)
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--steps", type=int, default=64)
    return ap.parse_args()


def run(experiment: str, args: argparse.Namespace, **extra):
    cfg = ExperimentConfig.from_dict(
        {"experiment": experiment, **extra}, seed=args.seed, trials=args.trials, jobs=args.jobs, steps=args.steps
    )
    table = run_experiment(cfg)
    emit(table, "csv", args.out)
    print(f"wrote {len(table)} rows to {args.out}")
    return cfg, table
