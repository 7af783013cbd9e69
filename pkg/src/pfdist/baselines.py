"""Reference distances: closed-form Gaussian W2 and KL, and sample-based W2."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .distributions import ContractError, GaussianSpec

__all__ = [
    "EXACT_MAX_COUNT",
    "W2SampleConfig",
    "W2Result",
    "psd_sqrt",
    "gaussian_w2",
    "gaussian_kl",
    "gaussian_mle",
    "sample_w2",
    "sinkhorn",
]

EXACT_MAX_COUNT = 4096


def psd_sqrt(S: np.ndarray) -> np.ndarray:
    """Symmetric square root with negative eigenvalues clamped to zero."""
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def gaussian_w2(p: GaussianSpec, q: GaussianSpec) -> float:
    """Bures-Wasserstein distance between two Gaussians."""
    if p.dim != q.dim:
        raise ContractError(f"dimension mismatch: {p.dim} vs {q.dim}")
    dm = p.mean - q.mean
    s1 = p.sqrt_cov()
    cross = psd_sqrt(s1 @ q.cov @ s1)
    sq = dm @ dm + np.trace(p.cov) + np.trace(q.cov) - 2.0 * np.trace(cross)
    return float(np.sqrt(max(sq, 0.0)))


def gaussian_kl(p: GaussianSpec, q: GaussianSpec) -> float:
    """``KL(p || q)``; ``q`` must have a nonsingular covariance."""
    if p.dim != q.dim:
        raise ContractError(f"dimension mismatch: {p.dim} vs {q.dim}")
    if np.any(q.evals <= 0):
        raise ContractError("KL needs a nondegenerate reference covariance")
    if np.any(p.evals <= 0):
        return float("inf")
    Uq, lq = q.evecs, q.evals
    q_inv = (Uq / lq) @ Uq.T
    dm = q.mean - p.mean
    val = np.trace(q_inv @ p.cov) + dm @ q_inv @ dm - p.dim + np.sum(np.log(lq)) - np.sum(np.log(p.evals))
    return float(0.5 * val)


def gaussian_mle(xs: np.ndarray) -> GaussianSpec:
    """Plug-in Gaussian from sample mean and (biased) sample covariance."""
    xs = np.asarray(xs, dtype=float)
    mean = xs.mean(axis=0)
    c = xs - mean
    return GaussianSpec(mean, c.T @ c / xs.shape[0])


@dataclass(frozen=True)
class W2SampleConfig:
    method: str = "exact"
    eps_reg: float = 0.05
    max_iters: int = 2000
    tol: float = 1e-6

    def __post_init__(self):
        if self.method not in ("exact", "entropic"):
            raise ContractError(f"unknown W2 method {self.method!r}")
        if not self.eps_reg > 0:
            raise ContractError("eps_reg must be positive")


@dataclass(frozen=True)
class W2Result:
    value: float
    method: str
    converged: bool = True
    iterations: int = 0

    def __float__(self) -> float:
        return self.value


def _lse(A: np.ndarray, axis: int) -> np.ndarray:
    m = A.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(A - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def sinkhorn(C: np.ndarray, eps: float, max_iters: int = 2000, tol: float = 1e-6):
    """Log-domain Sinkhorn between uniform marginals.

    The regularization is annealed from the cost scale down to ``eps`` (a few
    sweeps per halving) before iterating at ``eps`` itself. Returns
    ``(plan, converged, iterations)``, where convergence means the
    row-marginal L1 error fell below ``tol``; ``iterations`` counts sweeps at
    the target ``eps``.
    """
    n, m = C.shape
    log_a, log_b = -np.log(n), -np.log(m)
    f, g = np.zeros(n), np.zeros(m)

    def sweep(e, f, g):
        f = -e * _lse((g[None, :] - C) / e, axis=1) + e * log_a
        g = -e * _lse((f[:, None] - C) / e, axis=0) + e * log_b
        return f, g

    e = float(C.max())
    while e > 2 * eps:
        for _ in range(10):
            f, g = sweep(e, f, g)
        e *= 0.5
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        f, g = sweep(eps, f, g)
        if it % 10 == 0 or it == max_iters:
            P = np.exp((f[:, None] + g[None, :] - C) / eps)
            if np.abs(P.sum(axis=1) - 1.0 / n).sum() < tol:
                converged = True
                break
    P = np.exp((f[:, None] + g[None, :] - C) / eps)
    return P, converged, it


def sample_w2(xs: np.ndarray, ys: np.ndarray, cfg: W2SampleConfig = W2SampleConfig()) -> W2Result:
    """W2 between two equal-size point clouds.

    ``exact`` solves the squared-Euclidean assignment problem; ``entropic``
    returns the (non-debiased) Sinkhorn transport cost. Both are square-rooted.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if xs.shape != ys.shape:
        raise ContractError(f"point clouds must match in size and dimension: {xs.shape} vs {ys.shape}")
    C = cdist(xs, ys, "sqeuclidean")
    if cfg.method == "exact":
        if len(xs) > EXACT_MAX_COUNT:
            raise ContractError(f"exact assignment is limited to {EXACT_MAX_COUNT} points per side")
        rows, cols = linear_sum_assignment(C)
        return W2Result(float(np.sqrt(C[rows, cols].mean())), "exact")
    P, ok, it = sinkhorn(C, cfg.eps_reg, cfg.max_iters, cfg.tol)
    return W2Result(float(np.sqrt(np.sum(P * C))), "entropic", ok, it)
