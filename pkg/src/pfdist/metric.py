"""Probability flow distance and its Monte-Carlo estimator.

``PFD(p, q)^2 = E ||Psi(Phi_p(x_T)) - Psi(Phi_q(x_T))||^2`` with
``x_T ~ N(0, sigma_max^2 I)`` shared by both flows. The estimator averages the
squared gap over a fixed, seeded set of noise points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from os import PathLike
from typing import Any

import numpy as np

from .distributions import ContractError, DistributionSpec, GaussianSpec, score_provider
from .flow import SolverConfig, integrate_flow
from .rng import Stream, tag

__all__ = [
    "Descriptor",
    "IDENTITY",
    "CoupledNoiseSet",
    "PFDEstimate",
    "LipschitzProfile",
    "flow_map",
    "estimate_pfd",
    "closed_form_gaussian_pfd",
    "gronwall_gap_bound",
    "required_samples",
    "sample_size_bound",
    "hoeffding_halfwidth",
]

_NOISE_TAG = tag("coupled-noise")


@dataclass(frozen=True, eq=False)
class Descriptor:
    """Deterministic feature map applied to flow outputs.

    ``kind="identity"`` passes points through; ``kind="linear"`` maps
    ``x -> A x`` with ``A`` of shape ``(k, d)``.
    """

    kind: str = "identity"
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "identity":
            return
        if self.kind != "linear" or self.matrix is None:
            raise ContractError(f"unknown descriptor {self.kind!r}")
        A = np.array(self.matrix, dtype=float)
        if A.ndim != 2:
            raise ContractError("linear descriptor needs a 2-D matrix")
        A.setflags(write=False)
        object.__setattr__(self, "matrix", A)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return x
        if x.shape[-1] != self.matrix.shape[1]:
            raise ContractError(f"descriptor expects dimension {self.matrix.shape[1]}, got {x.shape[-1]}")
        return x @ self.matrix.T

    def operator_norm(self) -> float:
        return 1.0 if self.kind == "identity" else float(np.linalg.norm(self.matrix, 2))

    @classmethod
    def parse(cls, text: str) -> "Descriptor":
        """``identity`` or ``linear:<path>`` (``.npy``, or JSON/CSV matrix)."""
        if text == "identity":
            return IDENTITY
        if text.startswith("linear:"):
            return cls("linear", _load_matrix(text[len("linear:"):]))
        raise ContractError(f"cannot parse descriptor {text!r}")


IDENTITY = Descriptor()


def _load_matrix(path: str | PathLike) -> np.ndarray:
    path = str(path)
    if path.endswith(".npy"):
        return np.load(path)
    if path.endswith(".json"):
        import json

        with open(path) as fh:
            return np.array(json.load(fh), dtype=float)
    return np.loadtxt(path, delimiter=",", ndmin=2)


@dataclass(frozen=True, eq=False)
class CoupledNoiseSet:
    """``M`` shared starting points ``x_T^(i) ~ N(0, sigma_max^2 I)``.

    Point ``i`` is drawn from its own counter-based stream keyed on
    ``(seed, i, dim)``, so any prefix or single index can be regenerated.
    """

    seed: int
    M: int
    sigma_max: float
    dim: int
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.M < 1 or self.dim < 1:
            raise ContractError("noise set needs M >= 1 and dim >= 1")

    def __len__(self) -> int:
        return self.M

    def __getitem__(self, i: int) -> np.ndarray:
        if not 0 <= i < self.M:
            raise IndexError(i)
        gen = Stream(self.seed, (_NOISE_TAG, self.dim, int(i))).generator()
        return self.sigma_max * gen.standard_normal(self.dim)

    def vectors(self) -> np.ndarray:
        if "x" not in self._cache:
            x = np.stack([self[i] for i in range(self.M)])
            x.setflags(write=False)
            self._cache["x"] = x
        return self._cache["x"]

    def prefix(self, m: int) -> "CoupledNoiseSet":
        out = CoupledNoiseSet(self.seed, m, self.sigma_max, self.dim)
        if "x" in self._cache:
            out._cache["x"] = self._cache["x"][:m]
        return out


@dataclass(frozen=True, eq=False)
class LipschitzProfile:
    """Constants of the score-regularity assumption.

    ``L``: Lipschitz constant of both scores; ``eps``: uniform score gap;
    ``xi``: flow gap bound beyond ``T_xi``.
    """

    L: float
    eps: float
    xi: float
    T_xi: float

    def __post_init__(self):
        if not (self.L > 0 and self.xi > 0 and self.T_xi > 0 and self.eps >= 0):
            raise ContractError("Lipschitz profile needs L, xi, T_xi > 0 and eps >= 0")


@dataclass(frozen=True, eq=False)
class PFDEstimate:
    value: float
    squared_distances: np.ndarray
    M: int
    seed: int
    solver: str
    halfwidth: float | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"value": self.value, "M": self.M, "seed": self.seed, "solver": self.solver}
        if self.halfwidth is not None:
            out["halfwidth"] = self.halfwidth
        return out


def gronwall_gap_bound(profile: LipschitzProfile) -> float:
    """Uniform bound ``kappa`` on ``||Phi_p(x_T) - Phi_q(x_T)||``."""
    a = profile.L * profile.T_xi**2 / 2.0
    return math.exp(a) * profile.xi + profile.eps / profile.L * math.expm1(a)


def required_samples(kappa: float, gamma: float, eta: float) -> int:
    """Smallest ``M`` with ``M >= kappa^4 / (2 gamma^4) * ln(2 / eta)``."""
    if not gamma > 0:
        raise ContractError("accuracy gamma must be positive")
    if not 0 < eta < 1:
        raise ContractError("failure probability eta must lie in (0, 1)")
    return max(1, math.ceil(kappa**4 / (2.0 * gamma**4) * math.log(2.0 / eta)))


def sample_size_bound(profile: LipschitzProfile, gamma: float, eta: float) -> int:
    return required_samples(gronwall_gap_bound(profile), gamma, eta)


def hoeffding_halfwidth(kappa: float, M: int, eta: float = 0.05) -> float:
    """Halfwidth on the PFD scale at confidence ``1 - eta``.

    The squared gaps lie in ``[0, kappa^2]``; Hoeffding bounds their mean to
    ``s`` and ``|sqrt(a) - sqrt(b)| <= sqrt(|a - b|)`` turns that into
    ``sqrt(s)`` for the PFD itself.
    """
    s = kappa**2 * math.sqrt(math.log(2.0 / eta) / (2.0 * M))
    return math.sqrt(s)


def flow_map(spec: DistributionSpec, noise: CoupledNoiseSet, cfg: SolverConfig) -> np.ndarray:
    """Images ``Phi_spec(x_T^(i))`` for the whole noise set, shape ``(M, d)``."""
    if spec.dim != noise.dim:
        raise ContractError(f"spec dimension {spec.dim} does not match noise dimension {noise.dim}")
    return integrate_flow(score_provider(spec), noise.vectors(), cfg).x0


def estimate_pfd(
    p: DistributionSpec,
    q: DistributionSpec,
    noise: CoupledNoiseSet,
    cfg: SolverConfig,
    descriptor: Descriptor = IDENTITY,
    profile: LipschitzProfile | None = None,
    eta: float = 0.05,
) -> PFDEstimate:
    if p.dim != q.dim:
        raise ContractError(f"dimension mismatch: {p.dim} vs {q.dim}")
    # batch rows are noise indices, so a DivergenceError already names the samples
    xp = flow_map(p, noise, cfg)
    xq = xp if q is p else flow_map(q, noise, cfg)
    sq = np.sum((descriptor(xp) - descriptor(xq)) ** 2, axis=-1)
    hw = None
    if profile is not None:
        hw = hoeffding_halfwidth(gronwall_gap_bound(profile) * descriptor.operator_norm(), noise.M, eta)
    return PFDEstimate(float(np.sqrt(np.mean(sq))), sq, noise.M, noise.seed, cfg.fingerprint, hw)


def closed_form_gaussian_pfd(p: GaussianSpec, q: GaussianSpec) -> float:
    """``sqrt(||mu_p - mu_q||^2 + ||S_p^{1/2} - S_q^{1/2}||_F^2)`` (infinite horizon)."""
    if p.dim != q.dim:
        raise ContractError(f"dimension mismatch: {p.dim} vs {q.dim}")
    dm = p.mean - q.mean
    ds = p.sqrt_cov() - q.sqrt_cov()
    return float(np.sqrt(dm @ dm + np.sum(ds * ds)))
