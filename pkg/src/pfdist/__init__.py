"""Probability flow distance between distributions with exact analytic scores."""

from .baselines import W2SampleConfig, gaussian_kl, gaussian_w2, sample_w2
from .distributions import (
    SIGMA_MIN,
    ContractError,
    EmpiricalSpec,
    GaussianMixtureSpec,
    GaussianSpec,
    OutOfDomainError,
    load_spec,
    sample,
    score,
    score_empirical,
    score_gaussian,
    score_gmm,
)
from .flow import DivergenceError, SolverConfig, analytic_gaussian_flow, build_time_grid, integrate_flow
from .geneval import (
    EvaluationScenario,
    bias_variance,
    generalization_error,
    m_distance,
    memorization_error,
)
from .metric import (
    CoupledNoiseSet,
    Descriptor,
    LipschitzProfile,
    closed_form_gaussian_pfd,
    estimate_pfd,
    gronwall_gap_bound,
    sample_size_bound,
)
from .rng import Stream

__version__ = "0.1.0"
