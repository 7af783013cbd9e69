"""Synthetic studies: sample efficiency, PFD/W2 correlation, MtoG sweep and
bias-variance over dataset ensembles.

Each experiment is a pure function of its :class:`ExperimentConfig`; every
random draw is keyed on ``(seed, experiment, trial, ...)``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from os import PathLike
from typing import Any, Callable, Iterator

import numpy as np

from .baselines import W2SampleConfig, gaussian_kl, gaussian_mle, gaussian_w2, sample_w2
from .distributions import ContractError, random_gaussian, random_gmm, sample
from .flow import DivergenceError, SolverConfig
from .geneval import (
    EvaluationScenario,
    bias_variance,
    draw_training_set,
    generalization_error,
    m_distance,
    memorization_error,
    parse_builder,
)
from .metric import CoupledNoiseSet, closed_form_gaussian_pfd, estimate_pfd
from .rng import Stream

__all__ = [
    "EXPERIMENTS",
    "CSV_COLUMNS",
    "ExperimentConfig",
    "Row",
    "ResultTable",
    "run_sample_efficiency",
    "run_correlation",
    "run_mtog_sweep",
    "run_bias_variance",
    "run_experiment",
    "emit",
    "read_csv",
    "pearson",
]

log = logging.getLogger(__name__)

EXPERIMENTS = ("sample-efficiency", "correlation", "bias-variance", "mtog-sweep")
CSV_COLUMNS = ("experiment", "trial", "param_key", "param_value", "metric", "value", "seed", "solver_fingerprint")
SCHEMA_VERSION = 1

_DEFAULT_TRIALS = {"sample-efficiency": 10, "correlation": 100, "bias-variance": 5, "mtog-sweep": 10}
_DEFAULT_SAMPLES = {
    "sample-efficiency": [128, 256, 512, 1024, 2048, 4096],
    "correlation": [4096],
    "bias-variance": [16, 64, 256],
    "mtog-sweep": [16, 64, 256, 1024],
}


@dataclass
class ExperimentConfig:
    """Protocol parameters.

    ``samples`` is the swept count: estimation sample sizes ``M`` for
    sample-efficiency and correlation, training-set sizes ``N`` for the
    MtoG sweep and bias-variance (which evaluate on ``eval_samples`` noise
    points).
    """

    experiment: str
    dim: int = 5
    components: int = 5
    samples: list[int] = field(default_factory=list)
    trials: int = 0
    seed: int = 0
    sigma_max: float = 80.0
    sigma_min: float = 0.002
    steps: int = 64
    rho: float = 7.0
    solver: str = "heun"
    w2_method: str = "exact"
    mean_scale: float = 1.0
    eval_samples: int = 512
    builder: str = "empirical"
    ensemble: int = 2
    duplicate_every: int = 0
    include_duplicates: bool = False
    jobs: int = 1
    output: str | None = None

    def __post_init__(self):
        if self.experiment == "mtog":
            self.experiment = "mtog-sweep"
        if self.experiment not in EXPERIMENTS:
            raise ContractError(f"unknown experiment {self.experiment!r}")
        if not self.samples:
            self.samples = list(_DEFAULT_SAMPLES[self.experiment])
        if not self.trials:
            self.trials = _DEFAULT_TRIALS[self.experiment]
        self.samples = [int(s) for s in self.samples]
        counts = [self.dim, self.components, self.trials, self.eval_samples, self.ensemble, self.jobs, *self.samples]
        if min(counts) < 1:
            raise ContractError("all counts must be positive")

    @classmethod
    def from_dict(cls, doc: dict[str, Any], **overrides: Any) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ContractError(f"unknown config fields: {sorted(unknown)}")
        merged = {**doc, **{k: v for k, v in overrides.items() if v is not None}}
        return cls(**merged)

    def solver_config(self) -> SolverConfig:
        return SolverConfig.from_flags(self.sigma_max, self.sigma_min, self.steps, self.rho, self.solver)

    def stream(self, *keys: int | str) -> Stream:
        return Stream(self.seed).child(self.experiment, *keys)


@dataclass(frozen=True)
class Row:
    experiment: str
    trial: int
    param_key: str
    param_value: str
    metric: str
    value: float
    seed: int
    solver_fingerprint: str

    def sort_key(self):
        try:
            pv: tuple = (0, float(self.param_value), "")
        except ValueError:
            pv = (1, 0.0, self.param_value)
        return (self.trial, self.param_key, pv, self.metric)


@dataclass
class ResultTable:
    rows: list[Row] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def add(self, row: Row) -> None:
        if not np.isfinite(row.value):
            raise ValueError(f"non-finite value for {row.metric}")
        self.rows.append(row)

    def extend(self, rows) -> None:
        for r in rows:
            self.add(r)

    def sorted(self) -> "ResultTable":
        return ResultTable(sorted(self.rows, key=Row.sort_key), self.schema_version)

    @property
    def failed(self) -> bool:
        return any(r.metric.endswith(":diverged") for r in self.rows)

    def values(self, metric: str, param_value: str | None = None) -> np.ndarray:
        return np.array(
            [r.value for r in self.rows if r.metric == metric and (param_value is None or r.param_value == param_value)]
        )

    def __len__(self) -> int:
        return len(self.rows)


class _Trial:
    """Row factory bound to one (config, trial)."""

    def __init__(self, cfg: ExperimentConfig, trial: int, fingerprint: str):
        self.cfg, self.trial, self.fp = cfg, trial, fingerprint
        self.rows: list[Row] = []

    def add(self, key: str, value: Any, metric: str, x: float) -> None:
        self.rows.append(
            Row(self.cfg.experiment, self.trial, key, str(value), metric, float(x), self.cfg.seed, self.fp)
        )

    def guarded(self, key: str, value: Any, metric: str, fn: Callable[[], float]) -> None:
        try:
            self.add(key, value, metric, fn())
        except DivergenceError as err:
            log.warning("trial %d %s=%s: %s", self.trial, key, value, err)
            self.add(key, value, metric + ":diverged", err.step)


def _rel_err(est: float, truth: float) -> float:
    return abs(est - truth) / abs(truth)


def _sample_efficiency_trial(cfg: ExperimentConfig, t: int) -> list[Row]:
    sc = cfg.solver_config()
    tr = _Trial(cfg, t, sc.fingerprint)
    rng = cfg.stream(t, "pair").generator()
    p = random_gaussian(cfg.dim, rng, cfg.mean_scale)
    q = random_gaussian(cfg.dim, rng, cfg.mean_scale)
    pfd_true, w2_true, kl_true = closed_form_gaussian_pfd(p, q), gaussian_w2(p, q), gaussian_kl(p, q)
    m_max = max(cfg.samples)
    noise = CoupledNoiseSet(cfg.stream(t, "noise").derive_seed(), m_max, cfg.sigma_max, cfg.dim)
    xs_all = sample(p, m_max, cfg.stream(t, "xs"))
    ys_all = sample(q, m_max, cfg.stream(t, "ys"))
    w2cfg = W2SampleConfig(cfg.w2_method)
    for m in sorted(cfg.samples):
        xs, ys = xs_all[:m], ys_all[:m]
        tr.guarded("M", m, "pfd_rel_err", lambda: _rel_err(estimate_pfd(p, q, noise.prefix(m), sc).value, pfd_true))
        tr.add("M", m, "w2_rel_err", _rel_err(sample_w2(xs, ys, w2cfg).value, w2_true))
        tr.add("M", m, "kl_rel_err", _rel_err(gaussian_kl(gaussian_mle(xs), gaussian_mle(ys)), kl_true))
    return tr.rows


def _correlation_trial(cfg: ExperimentConfig, t: int) -> list[Row]:
    sc = cfg.solver_config()
    tr = _Trial(cfg, t, sc.fingerprint)
    rng = cfg.stream(t, "pair").generator()
    p = random_gmm(cfg.components, cfg.dim, rng, cfg.mean_scale)
    duplicate = cfg.duplicate_every > 0 and t % cfg.duplicate_every == 0
    q = p if duplicate else random_gmm(cfg.components, cfg.dim, rng, cfg.mean_scale)
    pair = "duplicate" if duplicate else "distinct"
    m = cfg.samples[0]
    noise = CoupledNoiseSet(cfg.stream(t, "noise").derive_seed(), m, cfg.sigma_max, cfg.dim)
    tr.guarded("pair", pair, "pfd", lambda: estimate_pfd(p, q, noise, sc).value)
    xs = sample(p, m, cfg.stream(t, "xs"))
    ys = sample(q, m, cfg.stream(t, "ys"))
    tr.add("pair", pair, "w2", sample_w2(xs, ys, W2SampleConfig(cfg.w2_method)).value)
    return tr.rows


def _teacher(cfg: ExperimentConfig):
    return random_gmm(cfg.components, cfg.dim, cfg.stream("teacher").generator(), cfg.mean_scale)


def _mtog_trial(cfg: ExperimentConfig, t: int) -> list[Row]:
    sc = cfg.solver_config()
    tr = _Trial(cfg, t, sc.fingerprint)
    teacher = _teacher(cfg)
    noise = CoupledNoiseSet(cfg.stream("noise").derive_seed(), cfg.eval_samples, cfg.sigma_max, cfg.dim)
    build = parse_builder(cfg.builder)
    for n in sorted(cfg.samples):
        ds = draw_training_set(teacher, n, cfg.stream(t, "train", n))
        s = EvaluationScenario(teacher, build(ds), ds, noise, sc)
        tr.guarded("N", n, "e_gen", lambda: generalization_error(s).value)
        tr.guarded("N", n, "e_mem", lambda: memorization_error(s).value)
        tr.guarded("N", n, "m_distance", lambda: m_distance(s))
    return tr.rows


def _bias_variance_trial(cfg: ExperimentConfig, t: int) -> list[Row]:
    sc = cfg.solver_config()
    tr = _Trial(cfg, t, sc.fingerprint)
    teacher = _teacher(cfg)
    noise = CoupledNoiseSet(cfg.stream("noise").derive_seed(), cfg.eval_samples, cfg.sigma_max, cfg.dim)
    build = parse_builder(cfg.builder)
    for n in sorted(cfg.samples):
        sets = [draw_training_set(teacher, n, cfg.stream(t, "train", n, j)) for j in range(cfg.ensemble)]
        try:
            rep = bias_variance(sets, build, teacher, noise, sc)
        except DivergenceError as err:
            tr.add("N", n, "bias_variance:diverged", err.step)
            continue
        for name in ("e_gen_sq_mean", "e_bias_sq", "e_var", "residual"):
            tr.add("N", n, name, getattr(rep, name))
    return tr.rows


_TRIAL_FNS = {
    "sample-efficiency": _sample_efficiency_trial,
    "correlation": _correlation_trial,
    "mtog-sweep": _mtog_trial,
    "bias-variance": _bias_variance_trial,
}


def iter_trials(cfg: ExperimentConfig) -> Iterator[list[Row]]:
    """Yield each trial's rows; order follows completion when ``jobs > 1``."""
    fn = _TRIAL_FNS[cfg.experiment]
    if cfg.jobs == 1:
        for t in range(cfg.trials):
            yield fn(cfg, t)
        return
    with ProcessPoolExecutor(cfg.jobs) as pool:
        yield from pool.map(fn, [cfg] * cfg.trials, range(cfg.trials))


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=float) - np.mean(x)
    y = np.asarray(y, dtype=float) - np.mean(y)
    return float(np.sum(x * y) / np.sqrt(np.sum(x * x) * np.sum(y * y)))


def _finish(cfg: ExperimentConfig, table: ResultTable) -> ResultTable:
    table = table.sorted()
    if cfg.experiment == "correlation":
        keep = [r for r in table.rows if cfg.include_duplicates or r.param_value != "duplicate"]
        by_trial: dict[int, dict[str, float]] = {}
        for r in keep:
            by_trial.setdefault(r.trial, {})[r.metric] = r.value
        pairs = [(v["pfd"], v["w2"]) for v in by_trial.values() if "pfd" in v and "w2" in v]
        if len(pairs) >= 2:
            a = np.array(pairs)
            fp = cfg.solver_config().fingerprint
            table.add(Row(cfg.experiment, -1, "pair", "all" if cfg.include_duplicates else "distinct",
                          "pearson_r", pearson(a[:, 0], a[:, 1]), cfg.seed, fp))
            table = table.sorted()
    return table


def run_experiment(cfg: ExperimentConfig, on_trial: Callable[[ResultTable], None] | None = None) -> ResultTable:
    table = ResultTable()
    for rows in iter_trials(cfg):
        table.extend(rows)
        if on_trial is not None:
            on_trial(table)
    return _finish(cfg, table)


def run_sample_efficiency(cfg: ExperimentConfig) -> ResultTable:
    return run_experiment(replace(cfg, experiment="sample-efficiency"))


def run_correlation(cfg: ExperimentConfig) -> ResultTable:
    return run_experiment(replace(cfg, experiment="correlation"))


def run_mtog_sweep(cfg: ExperimentConfig) -> ResultTable:
    return run_experiment(replace(cfg, experiment="mtog-sweep"))


def run_bias_variance(cfg: ExperimentConfig) -> ResultTable:
    return run_experiment(replace(cfg, experiment="bias-variance"))


# --- persistence ------------------------------------------------------------


def _render(table: ResultTable, fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in table.rows:
            w.writerow([r.experiment, r.trial, r.param_key, r.param_value, r.metric, repr(r.value), r.seed,
                        r.solver_fingerprint])
        return buf.getvalue()
    if fmt == "json":
        return json.dumps([asdict(r) for r in table.rows], indent=1) + "\n"
    raise ContractError(f"unknown format {fmt!r}")


def emit(table: ResultTable, fmt: str, path: str | PathLike) -> None:
    if len(table) == 0:
        raise ContractError("refusing to write an empty result table")
    text = _render(table, fmt)
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as err:
        raise OSError(f"could not write results to {path}: {err}") from err


def read_csv(path: str | PathLike) -> ResultTable:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV columns {reader.fieldnames}")
        rows = [
            Row(d["experiment"], int(d["trial"]), d["param_key"], d["param_value"], d["metric"], float(d["value"]),
                int(d["seed"]), d["solver_fingerprint"])
            for d in reader
        ]
    return ResultTable(rows)
