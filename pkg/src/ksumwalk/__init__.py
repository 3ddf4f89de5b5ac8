"""Simulation and verification toolkit for Bernoulli sequences whose
success probability depends on the sum of the previous k outcomes."""

__version__ = "0.1.0"

from .closed_form import (  # noqa: E402
    com_limits,
    inv_beta,
    limit_covariance,
    log_gamma,
    sigma2_elephant,
    sigma2_ksum,
    sigma2_minimal,
    sigma2_stationary,
)
from .model import (  # noqa: E402
    Elephant,
    InvalidParameterError,
    KSum,
    Minimal,
    ModelParams,
    Path,
    WindowState,
    canonical_params,
    center_of_mass,
    martingale_increments,
    simulate_path,
    step_probability,
)
from .oracle import BudgetExceededError, Pmf, exact_moments, exact_pmf, variance_trajectory  # noqa: E402
from .rng import PathStream  # noqa: E402
