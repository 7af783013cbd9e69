"""Backward probability-flow ODE under the EDM schedule.

With drift ``f = 0`` and diffusion ``g(t) = sqrt(2 t)`` the noise level is
``sigma(t) = t`` and the flow ODE reads ``dx/dt = -t * score(x, t)``. The
solvers here integrate it from ``sigma_max`` down a power-warped grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from .distributions import ContractError, GaussianSpec

__all__ = [
    "NoiseSchedule",
    "EDM",
    "TimeGrid",
    "SolverConfig",
    "FlowMapResult",
    "DivergenceError",
    "build_time_grid",
    "integrate_flow",
    "analytic_gaussian_flow",
]

ScoreFn = Callable[[np.ndarray, float], np.ndarray]


class DivergenceError(RuntimeError):
    """The ODE state became non-finite.

    ``step`` is the solver step that produced the bad state and ``rows`` the
    batch rows affected.
    """

    def __init__(self, step: int, rows: np.ndarray | None = None):
        self.step = step
        self.rows = np.array([], dtype=int) if rows is None else np.asarray(rows)
        msg = f"non-finite ODE state at step {step}"
        if self.rows.size:
            msg += f" (rows {self.rows[:8].tolist()}{'...' if self.rows.size > 8 else ''})"
        super().__init__(msg)


@dataclass(frozen=True)
class NoiseSchedule:
    family: str = "edm"

    def drift(self, t: float) -> float:
        return 0.0

    def diffusion(self, t: float) -> float:
        return float(np.sqrt(2.0 * t))

    def sigma(self, t: float) -> float:
        return float(t)


EDM = NoiseSchedule()


@dataclass(frozen=True, eq=False)
class TimeGrid:
    nodes: np.ndarray
    sigma_max: float
    sigma_min: float
    rho: float
    snap_to_zero: bool = False

    @property
    def steps(self) -> int:
        return len(self.nodes) - 1


def build_time_grid(
    sigma_max: float = 80.0,
    sigma_min: float = 0.002,
    n: int = 18,
    rho: float = 7.0,
    snap_to_zero: bool = False,
) -> TimeGrid:
    """Power-warped grid ``t_0 = sigma_max > ... > t_n = sigma_min``.

    With ``snap_to_zero`` one extra node ``0`` is appended; only scores that
    are defined at ``t = 0`` may be integrated on such a grid.
    """
    if not sigma_max > sigma_min > 0:
        raise ContractError(f"need sigma_max > sigma_min > 0, got {sigma_max}, {sigma_min}")
    if int(n) != n or n < 1:
        raise ContractError(f"step count must be a positive integer, got {n}")
    if rho < 1:
        raise ContractError(f"rho must be >= 1, got {rho}")
    n = int(n)
    inv = 1.0 / rho
    frac = np.arange(n + 1) / n
    nodes = (sigma_max**inv + frac * (sigma_min**inv - sigma_max**inv)) ** rho
    nodes[0], nodes[-1] = sigma_max, sigma_min
    if snap_to_zero:
        nodes = np.append(nodes, 0.0)
    if np.any(np.diff(nodes) >= 0):
        raise ContractError("grid is not strictly decreasing; reduce the step count")
    nodes.setflags(write=False)
    return TimeGrid(nodes, float(sigma_max), float(sigma_min), float(rho), snap_to_zero)


@dataclass(frozen=True, eq=False)
class SolverConfig:
    method: Literal["euler", "heun"] = "heun"
    grid: TimeGrid = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.method not in ("euler", "heun"):
            raise ContractError(f"unknown solver {self.method!r}")
        if self.grid is None:
            object.__setattr__(self, "grid", build_time_grid())

    @classmethod
    def from_flags(
        cls,
        sigma_max: float = 80.0,
        sigma_min: float = 0.002,
        steps: int = 18,
        rho: float = 7.0,
        solver: str = "heun",
    ) -> "SolverConfig":
        return cls(solver, build_time_grid(sigma_max, sigma_min, steps, rho))

    @property
    def fingerprint(self) -> str:
        g = self.grid
        fp = f"{self.method}:n={g.steps}:smax={g.sigma_max:g}:smin={g.sigma_min:g}:rho={g.rho:g}"
        return fp + (":zero" if g.snap_to_zero else "")


@dataclass(frozen=True, eq=False)
class FlowMapResult:
    x0: np.ndarray
    score_evaluations: int
    grid_used: TimeGrid


def _check_finite(x: np.ndarray, step: int) -> None:
    if not np.all(np.isfinite(x)):
        bad = ~np.isfinite(x)
        rows = np.nonzero(bad.any(axis=-1))[0] if x.ndim == 2 else None
        raise DivergenceError(step, rows)


def integrate_flow(score: ScoreFn, x_T: np.ndarray, cfg: SolverConfig) -> FlowMapResult:
    """Integrate ``dx/dt = -t * score(x, t)`` over ``cfg.grid``.

    ``x_T`` may be one point ``(d,)`` or a batch ``(B, d)``. Heun applies its
    trapezoidal correction on every step whose target node is positive; a
    step landing on ``t = 0`` stays Euler.
    """
    x = np.array(x_T, dtype=float)
    dim = getattr(score, "dim", None)
    if dim is not None and x.shape[-1] != dim:
        raise ContractError(f"x_T has dimension {x.shape[-1]}, score provider expects {dim}")
    nodes = cfg.grid.nodes
    heun = cfg.method == "heun"
    evals = 0
    for i in range(len(nodes) - 1):
        t_cur, t_next = float(nodes[i]), float(nodes[i + 1])
        h = t_next - t_cur
        d_cur = -t_cur * score(x, t_cur)
        evals += 1
        x_next = x + h * d_cur
        if heun and t_next > 0:
            _check_finite(x_next, i)
            d_next = -t_next * score(x_next, t_next)
            evals += 1
            x_next = x + h * (0.5 * d_cur + 0.5 * d_next)
        _check_finite(x_next, i)
        x = x_next
    return FlowMapResult(x, evals, cfg.grid)


def analytic_gaussian_flow(spec: GaussianSpec, x_T: np.ndarray, sigma_max: float, t_end: float) -> np.ndarray:
    """Exact flow of ``N(mu, S)`` from ``sigma_max`` to ``t_end``.

    ``mu + U diag(sqrt((lam + t_end^2) / (lam + sigma_max^2))) U^T (x_T - mu)``.
    """
    if not sigma_max >= t_end >= 0:
        raise ContractError("need sigma_max >= t_end >= 0")
    lam = spec.evals
    gain = np.sqrt((lam + t_end**2) / (lam + sigma_max**2))
    U = spec.evecs
    diff = np.asarray(x_T, dtype=float) - spec.mean
    return spec.mean + ((diff @ U) * gain) @ U.T
