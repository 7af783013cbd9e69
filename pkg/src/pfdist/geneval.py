"""Generalization and memorization errors built on the flow distance.

A model is any analytic spec. ``E_gen`` compares it to the data distribution,
``E_mem`` to the empirical distribution of its training set, and the
bias-variance split averages flow maps over an ensemble of training sets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .distributions import (
    ContractError,
    DistributionSpec,
    EmpiricalSpec,
    GaussianMixtureSpec,
    GaussianSpec,
    sample,
    spec_from_dict,
)
from .flow import SolverConfig
from .metric import IDENTITY, CoupledNoiseSet, Descriptor, PFDEstimate, estimate_pfd, flow_map
from .rng import Stream

__all__ = [
    "EvaluationScenario",
    "BiasVarianceReport",
    "draw_training_set",
    "empirical_builder",
    "kernel_builder",
    "parse_builder",
    "memorization_error",
    "generalization_error",
    "nearest_atom_distances",
    "m_distance",
    "decompose",
    "bias_variance",
    "scenario_from_dict",
]

ModelBuilder = Callable[[EmpiricalSpec], DistributionSpec]


@dataclass(frozen=True, eq=False)
class EvaluationScenario:
    data: DistributionSpec
    model: DistributionSpec
    training_set: EmpiricalSpec
    noise: CoupledNoiseSet
    cfg: SolverConfig
    descriptor: Descriptor = IDENTITY
    training_seed: int | None = None

    def __post_init__(self):
        dims = {self.data.dim, self.model.dim, self.training_set.dim, self.noise.dim}
        if len(dims) != 1:
            raise ContractError(f"scenario dimensions disagree: {sorted(dims)}")


@dataclass(frozen=True)
class BiasVarianceReport:
    e_gen_sq_mean: float
    e_bias_sq: float
    e_var: float
    J: int
    residual: float

    @property
    def e_bias(self) -> float:
        return float(np.sqrt(self.e_bias_sq))

    def to_dict(self) -> dict[str, Any]:
        return {
            "e_gen_sq_mean": self.e_gen_sq_mean,
            "e_bias_sq": self.e_bias_sq,
            "e_var": self.e_var,
            "J": self.J,
            "residual": self.residual,
        }


def draw_training_set(data: DistributionSpec, n: int, stream: Stream) -> EmpiricalSpec:
    return EmpiricalSpec(sample(data, n, stream))


def empirical_builder(dataset: EmpiricalSpec) -> EmpiricalSpec:
    return dataset


def kernel_builder(h: float) -> ModelBuilder:
    """Kernel-smoothed model: equal-weight mixture of ``N(y_i, h^2 I)``.

    ``h`` is the capacity knob; ``h = 0`` reproduces the training set.
    """
    if h < 0:
        raise ContractError("bandwidth must be nonnegative")

    def build(dataset: EmpiricalSpec) -> GaussianMixtureSpec:
        n, d = dataset.atoms.shape
        cov = (h * h) * np.eye(d)
        comps = tuple(GaussianSpec(y, cov) for y in dataset.atoms)
        return GaussianMixtureSpec(np.full(n, 1.0 / n), comps)

    build.bandwidth = h
    return build


def parse_builder(text: str) -> ModelBuilder:
    """``empirical`` or ``kernel:<h>``."""
    if text == "empirical":
        return empirical_builder
    if text.startswith("kernel:"):
        return kernel_builder(float(text.split(":", 1)[1]))
    raise ContractError(f"unknown model builder {text!r}")


def memorization_error(s: EvaluationScenario) -> PFDEstimate:
    return estimate_pfd(s.model, s.training_set, s.noise, s.cfg, s.descriptor)


def generalization_error(s: EvaluationScenario) -> PFDEstimate:
    return estimate_pfd(s.model, s.data, s.noise, s.cfg, s.descriptor)


def nearest_atom_distances(s: EvaluationScenario) -> np.ndarray:
    """Per-noise-sample distance from the model's generation to the nearest
    training atom, measured in descriptor space."""
    gen = s.descriptor(flow_map(s.model, s.noise, s.cfg))
    atoms = s.descriptor(s.training_set.atoms)
    return cdist(gen, atoms).min(axis=1)


def m_distance(s: EvaluationScenario) -> float:
    return float(nearest_atom_distances(s).mean())


def decompose(reference: np.ndarray, maps: Sequence[np.ndarray]) -> BiasVarianceReport:
    """Bias-variance split of coupled maps.

    ``reference`` has shape ``(M, k)``; ``maps`` holds ``J`` arrays of the same
    shape, one per training set, all evaluated on the same noise points.
    """
    J = len(maps)
    if J < 2:
        raise ContractError("bias-variance needs at least two datasets")
    r = np.asarray(reference, dtype=float)
    v = np.stack([np.asarray(m, dtype=float) for m in maps])
    if v.shape[1:] != r.shape:
        raise ContractError("all maps must share the reference shape")
    # offsets from the first map keep identical ensembles at exactly zero spread
    c = v - v[0]
    c_mean = c.mean(axis=0)
    e_bias_sq = float(np.mean(np.sum(((r - v[0]) - c_mean) ** 2, axis=-1)))
    e_var = float(np.mean(np.sum((c - c_mean) ** 2, axis=-1)))
    e_gen = float(np.mean(np.sum((r - v) ** 2, axis=-1)))
    return BiasVarianceReport(e_gen, e_bias_sq, e_var, J, e_gen - e_bias_sq - e_var)


def bias_variance(
    datasets: Sequence[EmpiricalSpec],
    model_builder: ModelBuilder,
    data: DistributionSpec,
    noise: CoupledNoiseSet,
    cfg: SolverConfig,
    descriptor: Descriptor = IDENTITY,
) -> BiasVarianceReport:
    if len(datasets) < 2:
        raise ContractError("bias-variance needs at least two datasets")
    reference = descriptor(flow_map(data, noise, cfg))
    maps = [descriptor(flow_map(model_builder(ds), noise, cfg)) for ds in datasets]
    return decompose(reference, maps)


def scenario_from_dict(doc: dict[str, Any], cfg: SolverConfig, descriptor: Descriptor = IDENTITY) -> EvaluationScenario:
    """Build a scenario from its JSON form.

    ``data`` is a spec document. ``training_set`` is either a spec document or
    ``{"size": N, "seed": s}`` (drawn from ``data``). ``model`` is either a
    spec document or ``{"builder": "empirical" | "kernel:h"}`` applied to the
    training set. ``samples`` and ``seed`` configure the noise set.
    """
    data = spec_from_dict(doc["data"])
    ts = doc["training_set"]
    training_seed = None
    if "type" in ts:
        training = spec_from_dict(ts)
        if not isinstance(training, EmpiricalSpec):
            raise ContractError("training_set must be an empirical spec")
    else:
        training_seed = int(ts["seed"])
        training = draw_training_set(data, int(ts["size"]), Stream(training_seed).child("training-set"))
    md = doc["model"]
    model = parse_builder(md["builder"])(training) if "builder" in md else spec_from_dict(md)
    noise = CoupledNoiseSet(int(doc.get("seed", 0)), int(doc.get("samples", 1024)), cfg.grid.sigma_max, data.dim)
    return EvaluationScenario(data, model, training, noise, cfg, descriptor, training_seed)
