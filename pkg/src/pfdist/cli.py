"""Command-line interface: ``pfdist estimate | baseline | eval | exp | plan``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .baselines import W2SampleConfig, gaussian_kl, gaussian_w2, sample_w2
from .distributions import ContractError, EmpiricalSpec, GaussianSpec, load_spec, sample
from .experiments import ExperimentConfig, ResultTable, emit, run_experiment
from .flow import DivergenceError, SolverConfig
from .geneval import (
    bias_variance,
    generalization_error,
    m_distance,
    memorization_error,
    parse_builder,
    scenario_from_dict,
)
from .metric import (
    CoupledNoiseSet,
    Descriptor,
    LipschitzProfile,
    estimate_pfd,
    gronwall_gap_bound,
    sample_size_bound,
)
from .rng import Stream

log = logging.getLogger("pfdist")


def _solver_flags(p: argparse.ArgumentParser, steps: int = 18) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--sigma-max", type=float, default=80.0)
    g.add_argument("--sigma-min", type=float, default=0.002)
    g.add_argument("--steps", type=int, default=steps)
    g.add_argument("--rho", type=float, default=7.0)
    g.add_argument("--solver", choices=("euler", "heun"), default="heun")


def _solver(args) -> SolverConfig:
    return SolverConfig.from_flags(args.sigma_max, args.sigma_min, args.steps, args.rho, args.solver)


def _print(doc) -> None:
    json.dump(doc, sys.stdout, indent=1)
    sys.stdout.write("\n")


def _profile(text: str | None) -> LipschitzProfile | None:
    if text is None:
        return None
    L, eps, xi, t_xi = (float(v) for v in text.split(","))
    return LipschitzProfile(L, eps, xi, t_xi)


def cmd_estimate(args) -> int:
    p, q = load_spec(args.p), load_spec(args.q)
    cfg = _solver(args)
    noise = CoupledNoiseSet(args.seed, args.samples, cfg.grid.sigma_max, p.dim)
    est = estimate_pfd(p, q, noise, cfg, Descriptor.parse(args.descriptor), _profile(args.lipschitz), args.eta)
    out = est.to_dict()
    if args.per_sample_file:
        np.savetxt(args.per_sample_file, est.squared_distances, delimiter=",", header="squared_distance",
                   comments="", fmt="%.17g")
        out["per_sample_file"] = str(args.per_sample_file)
    _print(out)
    return 0


def cmd_baseline(args) -> int:
    p, q = load_spec(args.p), load_spec(args.q)
    if args.metric == "kl":
        if not (isinstance(p, GaussianSpec) and isinstance(q, GaussianSpec)):
            raise ContractError("kl is only available for Gaussian specs")
        _print({"value": gaussian_kl(p, q), "method": "closed-form"})
        return 0
    if args.samples is None:
        if not (isinstance(p, GaussianSpec) and isinstance(q, GaussianSpec)):
            raise ContractError("closed-form w2 needs Gaussian specs; pass --samples for a sample estimate")
        _print({"value": gaussian_w2(p, q), "method": "closed-form"})
        return 0
    stream = Stream(args.seed).child("baseline")
    xs = sample(p, args.samples, stream.child("xs"))
    ys = sample(q, args.samples, stream.child("ys"))
    res = sample_w2(xs, ys, W2SampleConfig(args.method, eps_reg=args.eps_reg))
    out = {"value": res.value, "method": res.method}
    if res.method == "entropic":
        out["converged"] = res.converged
    _print(out)
    return 0


def cmd_eval(args) -> int:
    cfg = _solver(args)
    desc = Descriptor.parse(args.descriptor)
    if args.kind == "bias-variance":
        if not (args.datasets and args.data):
            raise ContractError("bias-variance needs --datasets and --data")
        files = sorted(Path(args.datasets).glob("*.json"))
        sets = [load_spec(f) for f in files]
        if not all(isinstance(s, EmpiricalSpec) for s in sets):
            raise ContractError("every dataset file must hold an empirical spec")
        data = load_spec(args.data)
        noise = CoupledNoiseSet(args.seed or 0, args.samples or 1024, cfg.grid.sigma_max, data.dim)
        rep = bias_variance(sets, parse_builder(args.builder), data, noise, cfg, desc)
        _print(rep.to_dict())
        return 0
    if not args.scenario:
        raise ContractError(f"eval {args.kind} needs --scenario")
    with open(args.scenario) as fh:
        doc = json.load(fh)
    if args.samples is not None:
        doc["samples"] = args.samples
    if args.seed is not None:
        doc["seed"] = args.seed
    s = scenario_from_dict(doc, cfg, desc)
    if args.kind == "mdist":
        _print({"value": m_distance(s), "M": s.noise.M})
    else:
        est = generalization_error(s) if args.kind == "gen" else memorization_error(s)
        _print(est.to_dict())
    return 0


def cmd_exp(args) -> int:
    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
    doc["experiment"] = args.experiment
    samples = [int(v) for v in args.samples.split(",")] if args.samples else None
    cfg = ExperimentConfig.from_dict(
        doc, seed=args.seed, trials=args.trials, dim=args.dim, components=args.components, samples=samples,
        jobs=args.jobs, output=str(args.out),
    )
    out_dir = Path(args.out).resolve().parent
    if not (out_dir.is_dir() and os.access(out_dir, os.W_OK)):
        raise ContractError(f"output directory {out_dir} is not writable")
    partial = ResultTable()

    def keep(table):
        partial.rows[:] = table.rows

    try:
        table = run_experiment(cfg, on_trial=keep)
    except Exception:
        if len(partial):
            emit(partial.sorted(), args.format, args.out)
            log.error("experiment failed; %d partial rows written to %s", len(partial), args.out)
        raise
    emit(table, args.format, args.out)
    if table.failed:
        log.error("some trials diverged; see ':diverged' rows in %s", args.out)
        return 1
    return 0


def cmd_plan(args) -> int:
    prof = LipschitzProfile(args.L, args.eps, args.xi, args.T_xi)
    _print({"kappa": gronwall_gap_bound(prof), "M": sample_size_bound(prof, args.gamma, args.eta)})
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pfdist", description="Probability flow distance toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="Monte-Carlo PFD between two specs")
    p.add_argument("--p", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--samples", type=int, default=1024)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--descriptor", default="identity", help="identity | linear:<matrix file>")
    p.add_argument("--per-sample-file", help="CSV dump of per-sample squared distances")
    p.add_argument("--lipschitz", help="L,eps,xi,T_xi; adds a Hoeffding halfwidth")
    p.add_argument("--eta", type=float, default=0.05)
    _solver_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("baseline", help="closed-form or sample-based reference distance")
    p.add_argument("metric", choices=("w2", "kl"))
    p.add_argument("--p", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=("exact", "entropic"), default="exact")
    p.add_argument("--eps-reg", type=float, default=0.05)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", help="generalization / memorization metrics")
    p.add_argument("kind", choices=("gen", "mem", "mdist", "bias-variance"))
    p.add_argument("--scenario")
    p.add_argument("--datasets")
    p.add_argument("--builder", default="empirical")
    p.add_argument("--data")
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--descriptor", default="identity")
    _solver_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("exp", help="run a synthetic experiment")
    p.add_argument("experiment", choices=("sample-efficiency", "correlation", "bias-variance", "mtog"))
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--components", type=int)
    p.add_argument("--samples", help="comma-separated list")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_exp)

    p = sub.add_parser("plan", help="sample size needed for accuracy gamma")
    p.add_argument("--L", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--xi", type=float, required=True)
    p.add_argument("--T-xi", dest="T_xi", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--eta", type=float, default=0.05)
    p.set_defaults(func=cmd_plan)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ContractError, DivergenceError, OSError) as err:
        log.error("%s", err)
        return 2


if __name__ == "__main__":
    sys.exit(main())
