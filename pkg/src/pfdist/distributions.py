"""Analytic distributions with exact noised scores.

Under the EDM forward process ``x_t = x_0 + t * z`` the noised version of a
distribution ``p`` is ``p_t = p * N(0, t^2 I)``. All three families here keep
that convolution in closed form:

* Gaussian ``N(mu, S)``              -> ``N(mu, S + t^2 I)``
* mixture of Gaussians               -> mixture of the noised components
* empirical (equal-weight Diracs)    -> isotropic mixture ``N(y_i, t^2 I)``

Scores accept a single point ``(d,)`` or a batch ``(B, d)`` and return the
same shape.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from os import PathLike
from typing import Any, Callable, Union

import numpy as np
from scipy.special import logsumexp

from .rng import Stream

__all__ = [
    "SIGMA_MIN",
    "ContractError",
    "OutOfDomainError",
    "GaussianSpec",
    "GaussianMixtureSpec",
    "EmpiricalSpec",
    "DistributionSpec",
    "score",
    "score_gaussian",
    "score_gmm",
    "score_empirical",
    "empirical_weights",
    "log_density",
    "sample",
    "score_provider",
    "spec_to_dict",
    "spec_from_dict",
    "load_spec",
    "dump_spec",
    "random_covariance",
    "random_gaussian",
    "random_gmm",
]

SIGMA_MIN = 0.002
"""Smallest noise level at which empirical scores may be queried."""

_SYM_TOL = 1e-12
_CLAMP_REL = 1e-12
_NEG_REL = 1e-8
_LOG_2PI = np.log(2.0 * np.pi)

# rows per chunk when a batch is broadcast against many mixture components
_CHUNK_ELEMS = 2_000_000


class ContractError(ValueError):
    """An argument violates an operation's preconditions."""


class OutOfDomainError(ContractError):
    """A noise level lies outside the range where a score is defined."""


def _as_points(x: np.ndarray, d: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    if pts.ndim != 2 or pts.shape[1] != d:
        raise ContractError(f"expected points of dimension {d}, got shape {x.shape}")
    return pts, single


def _check_t(t: float) -> float:
    t = float(t)
    if not t > 0.0:
        raise OutOfDomainError(f"noise level must be positive, got {t}")
    return t


@dataclass(frozen=True, eq=False)
class GaussianSpec:
    """Multivariate normal ``N(mean, cov)`` with a cached eigendecomposition.

    Eigenvalues below ``1e-12 * max_eigenvalue`` are clamped to zero, so
    degenerate (even zero) covariances are allowed.
    """

    mean: np.ndarray
    cov: np.ndarray
    evecs: np.ndarray = field(init=False, repr=False)
    evals: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        d = mean.shape[0]
        cov = np.array(self.cov, dtype=float)
        if cov.ndim == 0:
            cov = cov * np.eye(d)
        if cov.shape != (d, d):
            raise ContractError(f"covariance shape {cov.shape} does not match mean dimension {d}")
        norm = np.linalg.norm(cov)
        if np.linalg.norm(cov - cov.T) > _SYM_TOL * max(norm, 1e-300):
            raise ContractError("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        evals, evecs = np.linalg.eigh(cov)
        top = max(float(evals.max()), 0.0)
        if evals.min() < -_NEG_REL * top:
            raise ContractError(f"covariance is not positive semidefinite (min eigenvalue {evals.min():.3g})")
        evals = np.where(evals < _CLAMP_REL * top, 0.0, evals)
        for name, value in (("mean", mean), ("cov", cov), ("evecs", evecs), ("evals", evals)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def sqrt_cov(self) -> np.ndarray:
        return (self.evecs * np.sqrt(self.evals)) @ self.evecs.T


@dataclass(frozen=True, eq=False)
class GaussianMixtureSpec:
    """Finite mixture ``sum_k w_k N(mean_k, cov_k)``.

    Zero weights are accepted (the component is then never sampled and has no
    influence on the score); weights must sum to one within 1e-12.
    """

    weights: np.ndarray
    components: tuple[GaussianSpec, ...]
    _means: np.ndarray = field(init=False, repr=False)
    _evecs: np.ndarray = field(init=False, repr=False)
    _evals: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float).reshape(-1)
        comps = tuple(self.components)
        if len(comps) == 0 or len(comps) != weights.shape[0]:
            raise ContractError("need one weight per component and at least one component")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ContractError("mixture weights must be nonnegative and sum to 1")
        d = comps[0].dim
        if any(c.dim != d for c in comps):
            raise ContractError("all mixture components must share one dimension")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "_means", np.stack([c.mean for c in comps]))
        object.__setattr__(self, "_evecs", np.stack([c.evecs for c in comps]))
        object.__setattr__(self, "_evals", np.stack([c.evals for c in comps]))

    @classmethod
    def from_params(cls, weights, means, covs) -> "GaussianMixtureSpec":
        return cls(weights, tuple(GaussianSpec(m, c) for m, c in zip(means, covs)))

    @property
    def dim(self) -> int:
        return self._means.shape[1]


@dataclass(frozen=True, eq=False)
class EmpiricalSpec:
    """Equal-weight empirical distribution over ``atoms`` (shape ``(N, d)``)."""

    atoms: np.ndarray
    _sq_norms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if atoms.ndim != 2 or atoms.shape[0] < 1:
            raise ContractError("an empirical distribution needs at least one atom")
        atoms.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "_sq_norms", np.einsum("nd,nd->n", atoms, atoms))

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def __len__(self) -> int:
        return self.atoms.shape[0]


DistributionSpec = Union[GaussianSpec, GaussianMixtureSpec, EmpiricalSpec]


# --- scores -----------------------------------------------------------------


def score_gaussian(spec: GaussianSpec, x: np.ndarray, t: float) -> np.ndarray:
    """``(S + t^2 I)^{-1} (mu - x)`` through the cached eigenbasis."""
    pts, single = _as_points(x, spec.dim)
    t = _check_t(t)
    U = spec.evecs
    coords = (spec.mean - pts) @ U
    out = (coords / (spec.evals + t * t)) @ U.T
    return out[0] if single else out


def _gmm_terms(spec: GaussianMixtureSpec, pts: np.ndarray, t: float):
    # per-component log-density and score for a chunk of points: (B, K), (B, K, d)
    var = spec._evals + t * t  # (K, d)
    coords = np.einsum("kji,bkj->bki", spec._evecs, spec._means[None, :, :] - pts[:, None, :])
    logn = -0.5 * (np.sum(coords**2 / var, axis=-1) + np.sum(np.log(var), axis=-1) + spec.dim * _LOG_2PI)
    comp_scores = np.einsum("kij,bkj->bki", spec._evecs, coords / var)
    return logn, comp_scores


def _chunks(n_rows: int, per_row: int):
    step = max(1, _CHUNK_ELEMS // max(per_row, 1))
    for start in range(0, n_rows, step):
        yield slice(start, min(start + step, n_rows))


def score_gmm(spec: GaussianMixtureSpec, x: np.ndarray, t: float) -> np.ndarray:
    """Responsibility-weighted sum of the noised component scores."""
    pts, single = _as_points(x, spec.dim)
    t = _check_t(t)
    with np.errstate(divide="ignore"):
        log_w = np.log(spec.weights)
    out = np.empty_like(pts)
    K, d = spec._means.shape
    for sl in _chunks(pts.shape[0], K * d):
        logn, comp_scores = _gmm_terms(spec, pts[sl], t)
        logits = log_w + logn
        resp = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
        out[sl] = np.einsum("bk,bki->bi", resp, comp_scores)
    return out[0] if single else out


def empirical_weights(spec: EmpiricalSpec, x: np.ndarray, t: float) -> np.ndarray:
    """Posterior weight of each atom given the noised point, shape ``(B, N)``."""
    pts, _ = _as_points(x, spec.dim)
    t = _check_t(t)
    # ||x||^2 is constant per row and cancels in the softmax
    logits = (pts @ spec.atoms.T - 0.5 * spec._sq_norms) / (t * t)
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    return w


def score_empirical(spec: EmpiricalSpec, x: np.ndarray, t: float, sigma_min: float = SIGMA_MIN) -> np.ndarray:
    """Score of the noised empirical distribution.

    Raises :class:`OutOfDomainError` for ``t < sigma_min``; the Dirac-mixture
    score blows up as ``t -> 0`` so callers must stop the time grid there.
    """
    t = float(t)
    if t < sigma_min * (1.0 - 1e-9):
        raise OutOfDomainError(f"empirical score queried at t={t:g} below sigma_min={sigma_min:g}")
    pts, single = _as_points(x, spec.dim)
    out = np.empty_like(pts)
    for sl in _chunks(pts.shape[0], len(spec)):
        w = empirical_weights(spec, pts[sl], t)
        out[sl] = (w @ spec.atoms - pts[sl]) / (t * t)
    return out[0] if single else out


def score(spec: DistributionSpec, x: np.ndarray, t: float) -> np.ndarray:
    if isinstance(spec, GaussianSpec):
        return score_gaussian(spec, x, t)
    if isinstance(spec, GaussianMixtureSpec):
        return score_gmm(spec, x, t)
    if isinstance(spec, EmpiricalSpec):
        return score_empirical(spec, x, t)
    raise TypeError(f"not a distribution spec: {type(spec).__name__}")


def score_provider(spec: DistributionSpec) -> Callable[[np.ndarray, float], np.ndarray]:
    """Bind ``spec`` into a ``(x, t) -> score`` callable for the ODE solver."""

    def provider(x, t):
        return score(spec, x, t)

    provider.dim = spec.dim
    return provider


def log_density(spec: DistributionSpec, x: np.ndarray, t: float) -> np.ndarray:
    """Log-density of the noised distribution ``p_t`` at ``x``.

    ``t = 0`` is allowed for Gaussians and mixtures with nondegenerate
    covariances; empirical specs need ``t > 0``.
    """
    if isinstance(spec, GaussianSpec):
        spec = GaussianMixtureSpec(np.ones(1), (spec,))
    if isinstance(spec, EmpiricalSpec):
        pts, single = _as_points(x, spec.dim)
        t = _check_t(t)
        sq = np.sum((pts[:, None, :] - spec.atoms[None, :, :]) ** 2, axis=-1)
        logn = -0.5 * (sq / (t * t) + spec.dim * (2 * np.log(t) + _LOG_2PI))
        out = logsumexp(logn, axis=1) - np.log(len(spec))
        return out[0] if single else out
    pts, single = _as_points(x, spec.dim)
    with np.errstate(divide="ignore"):
        logn, _ = _gmm_terms(spec, pts, float(t))
        out = logsumexp(np.log(spec.weights) + logn, axis=1)
    return out[0] if single else out


# --- sampling ---------------------------------------------------------------


def sample(spec: DistributionSpec, count: int, stream: Stream) -> np.ndarray:
    """Draw ``count`` i.i.d. points, shape ``(count, d)``.

    Component choices and Gaussian variates come from separate child streams,
    so the first ``k`` draws do not depend on ``count``.
    """
    if count < 1:
        raise ContractError("count must be positive")
    if isinstance(spec, EmpiricalSpec):
        idx = stream.generator("atom").integers(0, len(spec), size=count)
        return spec.atoms[idx].copy()
    z = stream.generator("normal").standard_normal((count, spec.dim))
    if isinstance(spec, GaussianSpec):
        return spec.mean + z @ spec.sqrt_cov()
    if isinstance(spec, GaussianMixtureSpec):
        u = stream.generator("component").random(count)
        cum = np.cumsum(spec.weights)
        cum[-1] = 1.0
        comp = np.minimum(np.searchsorted(cum, u, side="right"), len(spec.components) - 1)
        out = np.empty((count, spec.dim))
        for k, c in enumerate(spec.components):
            mask = comp == k
            if mask.any():
                out[mask] = c.mean + z[mask] @ c.sqrt_cov()
        return out
    raise TypeError(f"not a distribution spec: {type(spec).__name__}")


# --- serialization ----------------------------------------------------------


def spec_to_dict(spec: DistributionSpec) -> dict[str, Any]:
    if isinstance(spec, GaussianSpec):
        return {"type": "gaussian", "mean": spec.mean.tolist(), "cov": spec.cov.tolist()}
    if isinstance(spec, GaussianMixtureSpec):
        return {
            "type": "gmm",
            "components": [
                {"weight": float(w), "mean": c.mean.tolist(), "cov": c.cov.tolist()}
                for w, c in zip(spec.weights, spec.components)
            ],
        }
    if isinstance(spec, EmpiricalSpec):
        return {"type": "empirical", "atoms": spec.atoms.tolist()}
    raise TypeError(f"not a distribution spec: {type(spec).__name__}")


def spec_from_dict(doc: dict[str, Any]) -> DistributionSpec:
    kind = doc.get("type")
    if kind == "gaussian":
        return GaussianSpec(doc["mean"], doc["cov"])
    if kind == "gmm":
        comps = doc["components"]
        return GaussianMixtureSpec.from_params(
            [c["weight"] for c in comps], [c["mean"] for c in comps], [c["cov"] for c in comps]
        )
    if kind == "empirical":
        return EmpiricalSpec(doc["atoms"])
    raise ContractError(f"unknown distribution type {kind!r}")


def load_spec(path: str | PathLike) -> DistributionSpec:
    with open(path) as fh:
        return spec_from_dict(json.load(fh))


def dump_spec(spec: DistributionSpec, path: str | PathLike) -> None:
    with open(path, "w") as fh:
        json.dump(spec_to_dict(spec), fh, indent=1)


# --- random instances for experiments --------------------------------------


def random_covariance(d: int, rng: np.random.Generator) -> np.ndarray:
    """Well-conditioned SPD matrix ``A A^T / d + 0.1 I``."""
    A = rng.standard_normal((d, d))
    return A @ A.T / d + 0.1 * np.eye(d)


def random_gaussian(d: int, rng: np.random.Generator, mean_scale: float = 1.0) -> GaussianSpec:
    return GaussianSpec(mean_scale * rng.standard_normal(d), random_covariance(d, rng))


def random_gmm(k: int, d: int, rng: np.random.Generator, mean_scale: float = 1.0) -> GaussianMixtureSpec:
    weights = rng.dirichlet(np.ones(k))
    means = mean_scale * rng.standard_normal((k, d))
    covs = [random_covariance(d, rng) for _ in range(k)]
    return GaussianMixtureSpec.from_params(weights, means, covs)
