"""Closed-form asymptotic variances and limit parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import Elephant, Minimal, ModelParams, canonical_params

# Lanczos approximation, g = 7, n = 9 (Numerical Recipes / Boost coefficients).
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

THETA_HALF_SWITCH = 1e-6

BRANCH_K1 = "K1"
BRANCH_THETA_HALF = "ThetaHalf"
BRANCH_GENERAL = "General"
BRANCH_THETA_ZERO = "ThetaZero"


def log_gamma(x: float) -> float:
    """Natural log of the gamma function for ``x > 0``."""
    if not x > 0.0:
        raise ValueError(f"log_gamma requires x > 0, got {x!r}")
    if x < 0.5:
        # reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        return math.log(math.pi / math.sin(math.pi * x)) - log_gamma(1.0 - x)
    x -= 1.0
    a = _LANCZOS_COEF[0]
    t = x + _LANCZOS_G + 0.5
    for i in range(1, 9):
        a += _LANCZOS_COEF[i] / (x + i)
    return _HALF_LOG_2PI + (x + 0.5) * math.log(t) - t + math.log(a)


def inv_beta(k: int, a: float) -> float:
    """``1 / B(k, a) = Gamma(k + a) / (Gamma(k) Gamma(a))``."""
    if not a > 0.0:
        raise ValueError(f"inv_beta requires a > 0, got {a!r}")
    if k < 1:
        raise ValueError(f"inv_beta requires k >= 1, got {k!r}")
    if k == 1:
        return a
    return math.exp(log_gamma(k + a) - log_gamma(k) - log_gamma(a))


@dataclass(frozen=True)
class VarianceResult:
    sigma2: float
    branch: str
    inputs: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ElephantVariance(VarianceResult):
    """Canonical elephant variance with the alternative printed value.

    ``printed`` uses the prefactor ``1 / (4 (1 - alpha))`` for ``k >= 2``;
    ``discrepancy`` is set when it differs from ``sigma2`` by more than
    1e-9 relative.
    """

    printed: Optional[float] = None
    discrepancy: bool = False


@dataclass(frozen=True)
class LimitSpec:
    sigma2: float
    mean_rate: float
    covariance_rule: str = "sigma2/t"

    @property
    def com_variance(self) -> float:
        return self.sigma2 / 3.0


def _harmonic(k: int) -> float:
    return math.fsum(1.0 / j for j in range(1, k + 1))


def bracket_general(theta: float, k: int) -> float:
    """``1 - theta^2/k^2 * (k - 1/B(k, 2 theta)) / (1 - 2 theta)`` for theta != 1/2."""
    return 1.0 - theta * theta / (k * k) * (k - inv_beta(k, 2.0 * theta)) / (1.0 - 2.0 * theta)


def bracket_harmonic(theta: float, k: int) -> float:
    """``1 - theta^2/k * H_k``, the theta = 1/2 form of the bracket."""
    return 1.0 - theta * theta / k * _harmonic(k)


def variance_general_branch(p: float, theta: float, k: int) -> float:
    return p * (1.0 - p) / (1.0 - theta) ** 2 * bracket_general(theta, k)


def variance_harmonic_branch(p: float, theta: float, k: int) -> float:
    return p * (1.0 - p) / (1.0 - theta) ** 2 * bracket_harmonic(theta, k)


def _bracket(theta: float, k: int) -> tuple[float, str]:
    if abs(theta - 0.5) < THETA_HALF_SWITCH:
        return bracket_harmonic(theta, k), BRANCH_THETA_HALF
    return bracket_general(theta, k), BRANCH_GENERAL


def sigma2_ksum(p: float, theta: float, k: int) -> VarianceResult:
    """Asymptotic variance of ``(S_n - n p) / sqrt(n)`` for the k-sum model."""
    params = ModelParams(p, theta, k)
    p, theta, k = params.p, params.theta, params.k
    inputs = {"p": p, "theta": theta, "k": k}
    if theta == 0.0:
        return VarianceResult(p * (1.0 - p), BRANCH_THETA_ZERO, inputs)
    if k == 1:
        return VarianceResult(p * (1.0 - p) * (1.0 + theta) / (1.0 - theta), BRANCH_K1, inputs)
    bracket, branch = _bracket(theta, k)
    return VarianceResult(p * (1.0 - p) / (1.0 - theta) ** 2 * bracket, branch, inputs)


def sigma2_params(params: ModelParams) -> float:
    return sigma2_ksum(params.p, params.theta, params.k).sigma2


def sigma2_minimal(r: float, q: float, k: int) -> VarianceResult:
    """Variance of the finite-memory minimal walk, written in ``(r, q)``."""
    canonical_params(Minimal(r, q, k))
    d = r - q
    inputs = {"r": r, "q": q, "k": k}
    if d == 0.0:
        return VarianceResult(q * (1.0 - r), BRANCH_THETA_ZERO, inputs)
    if k == 1:
        return VarianceResult(q * (1.0 - r) * (1.0 + d) / (1.0 - d) ** 3, BRANCH_K1, inputs)
    bracket, branch = _bracket(d, k)
    return VarianceResult(q * (1.0 - r) / (1.0 - d) ** 4 * bracket, branch, inputs)


def sigma2_elephant(alpha: float, k: int) -> ElephantVariance:
    """Variance of the +-1 elephant position ``S^E_n / sqrt(n)``.

    The canonical value is ``4 * sigma2_ksum(1/2, 2 alpha - 1, k)``.
    """
    params = canonical_params(Elephant(alpha, k))
    base = sigma2_ksum(params.p, params.theta, params.k)
    canonical = 4.0 * base.sigma2
    theta = params.theta
    if theta == 0.0:
        printed = 1.0
    elif k == 1:
        printed = alpha / (1.0 - alpha)
    else:
        printed = 1.0 / (4.0 * (1.0 - alpha)) * _bracket(theta, k)[0]
    discrepancy = abs(printed - canonical) > 1e-9 * abs(canonical)
    return ElephantVariance(
        canonical,
        base.branch,
        {"alpha": alpha, "k": k},
        printed=printed,
        discrepancy=discrepancy,
    )


def sigma2_stationary(p: float, theta: float, k: int) -> float:
    """Long-run variance of the stationary regime, from its autocorrelations.

    Past trial ``k + 1`` the centered outcomes follow
    ``Y_i = (theta/k) * (Y_{i-1} + ... + Y_{i-k}) + L_i`` with martingale
    differences ``L_i``, so the long-run variance is
    ``E[e(1-e)] / (1 - theta)^2`` and ``E[e(1-e)] = p(1-p) - Var(e)``.
    ``Var(e)`` comes from the Yule-Walker autocorrelations. Used as an
    independent reference next to :func:`sigma2_ksum`.
    """
    params = ModelParams(p, theta, k)
    k = params.k
    phi = params.theta / k
    a = np.eye(k + 1)
    b = np.zeros(k + 1)
    b[0] = 1.0
    for h in range(1, k + 1):
        for j in range(1, k + 1):
            a[h, abs(h - j)] -= phi
    rho = np.linalg.solve(a, b)
    window_var = k + 2.0 * sum((k - j) * rho[j] for j in range(1, k))
    return p * (1.0 - p) * (1.0 - phi * phi * window_var) / (1.0 - params.theta) ** 2


def limit_covariance(s: float, t: float, sigma2: float) -> float:
    """Limiting ``E[W_s W_t] = sigma2 / t`` for ``0 < s <= t``."""
    if not 0.0 < s <= t:
        raise ValueError(f"limit_covariance requires 0 < s <= t, got s={s!r}, t={t!r}")
    return sigma2 / t


def com_limits(kind) -> LimitSpec:
    """Limits of the center of mass: ``C_n / n -> p/2`` with
    ``sqrt(n) (C_n/n - p/2)`` asymptotically ``N(0, sigma2/3)``.

    For an :class:`Elephant` walk the +-1 encoding is used, so the mean
    rate is 0 and ``sigma2`` is the elephant variance.
    """
    if isinstance(kind, Elephant):
        s2 = sigma2_elephant(kind.alpha, kind.k).sigma2
        return LimitSpec(s2, 0.0)
    params = canonical_params(kind)
    return LimitSpec(sigma2_params(params), params.p / 2.0)
