"""Exact distributions by forward dynamic programming over memory windows.

The state before trial ``i`` is the window mask (``min(i-1, k)`` bits, bit 0
oldest) together with the running count ``S_{i-1}``. Tables are dense
arrays indexed ``[mask, s]`` and rolled forward one trial at a time. Mass
is never renormalized; drift beyond 1e-12 is reported as an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .closed_form import sigma2_params
from .model import Elephant, Minimal, ModelParams, canonical_params

MAX_K = 16
MAX_TRANSITIONS = 1e10
MAX_AUDIT_N = 10_000
MAX_QUAD_N = 200_000
MASS_TOL = 1e-12
# elephant rule vs canonical rule differ only by rounding in e
REFLECTION_TOL = 1e-15

# probability rule: (window sums, window length) -> success probabilities
Rule = Callable[[np.ndarray, int], np.ndarray]


class BudgetExceededError(RuntimeError):
    def __init__(self, message: str, cost: float):
        super().__init__(message)
        self.cost = cost


def check_budget(k: int, n: int) -> float:
    """Raise unless a ``(k, n)`` sweep fits the configured budget; return
    the estimated transition count ``2^k * n^2``."""
    cost = float(2**k) * float(n) ** 2
    if k > MAX_K:
        raise BudgetExceededError(
            f"k={k} exceeds the exact-oracle limit k <= {MAX_K} "
            f"(estimated cost 2^k*n^2 = {cost:.3e} transitions)",
            cost,
        )
    if cost > MAX_TRANSITIONS:
        raise BudgetExceededError(
            f"estimated cost 2^k*n^2 = {cost:.3e} transitions exceeds budget {MAX_TRANSITIONS:.0e}",
            cost,
        )
    return cost


@dataclass(frozen=True)
class Pmf:
    """``probs[s] = P(S_n = s)`` for ``s = 0..n``."""

    n: int
    probs: np.ndarray

    def __post_init__(self):
        if self.probs.shape != (self.n + 1,):
            raise ValueError(f"pmf over S_{self.n} needs {self.n + 1} entries")
        if np.any(self.probs < 0.0):
            raise ValueError("negative probability mass")
        total = math.fsum(self.probs)
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"probability mass drifted to {total!r}")


def _popcounts(length: int) -> np.ndarray:
    masks = np.arange(2**length, dtype=np.int64)
    counts = np.zeros_like(masks)
    for b in range(length):
        counts += (masks >> b) & 1
    return counts


def ksum_rule(params: ModelParams) -> Rule:
    base, theta = params.base, params.theta

    def rule(sums: np.ndarray, length: int) -> np.ndarray:
        return base + theta * sums / length

    return rule


def minimal_rule(r: float, q: float) -> Rule:
    """Recall rule of the minimal walk: ``q + (r - q) * window mean``."""

    def rule(sums: np.ndarray, length: int) -> np.ndarray:
        return q + (r - q) * sums / length

    return rule


def elephant_rule(alpha: float) -> Rule:
    """Elephant rule ``(1 + (2 alpha - 1) * S^E_window / L) / 2`` with the
    +-1 window sum ``S^E_window = 2 * sums - L``."""

    def rule(sums: np.ndarray, length: int) -> np.ndarray:
        return 0.5 * (1.0 + (2.0 * alpha - 1.0) * (2 * sums - length) / length)

    return rule


def _forward_pmf(n: int, k: int, first: float, rule: Rule) -> np.ndarray:
    check_budget(k, n)
    # after trial 1: mask in {0, 1}, s in {0, 1}
    table = np.array([[1.0 - first, 0.0], [0.0, first]])
    length = 1
    counts = {}
    for i in range(2, n + 1):
        # table has shape (2**length, i): masks over the previous min(i-1, k) bits, s in 0..i-1
        if length not in counts:
            counts[length] = _popcounts(length)
        e = rule(counts[length], length)
        width = table.shape[1]
        if length < k:
            new = np.zeros((2 ** (length + 1), width + 1))
            new[: 2**length, :width] = table * (1.0 - e)[:, None]
            new[2**length :, 1:] = table * e[:, None]
            length += 1
        else:
            half = 2 ** (k - 1)
            t3 = table.reshape(half, 2, width)
            e2 = e.reshape(half, 2)
            new = np.zeros((2**k, width + 1))
            new[:half, :width] = (t3 * (1.0 - e2)[:, :, None]).sum(axis=1)
            new[half:, 1:] = (t3 * e2[:, :, None]).sum(axis=1)
        table = new
    return table.sum(axis=0)


def exact_pmf(params: ModelParams, n: int) -> Pmf:
    """Exact distribution of ``S_n`` for the k-sum model."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return Pmf(n, _forward_pmf(n, params.k, params.p, ksum_rule(params)))


def exact_pmf_minimal(r: float, q: float, k: int, n: int) -> Pmf:
    """Exact distribution of ``S^M_n`` propagated with the minimal-walk rule
    itself rather than through the canonical mapping. The first trial uses
    the mapped ``p = q / (1 - r + q)``."""
    p1 = canonical_params(Minimal(r, q, k)).p
    return Pmf(n, _forward_pmf(n, k, p1, minimal_rule(r, q)))


def exact_pmf_elephant(alpha: float, k: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact law of the +-1 position ``S^E_n``, propagated with the elephant
    rule; the first step is symmetric. Returns ``(positions, probs)`` with
    ``positions = 2 s - n``."""
    canonical_params(Elephant(alpha, k))
    probs = _forward_pmf(n, k, 0.5, elephant_rule(alpha))
    Pmf(n, probs)
    return 2 * np.arange(n + 1) - n, probs


def exact_moments(pmf: Pmf) -> tuple[float, float]:
    s = np.arange(pmf.n + 1, dtype=np.float64)
    mean = float(np.dot(s, pmf.probs))
    var = float(np.dot((s - mean) ** 2, pmf.probs))
    return mean, var


def _moment_sweep(params: ModelParams, n_max: int):
    """Yield ``(i, masses, e)`` before every trial ``i`` along with the
    centered moments ``E[(S_{i-1} - (i-1)p) 1{mask}]`` and second moments.

    Tracks three arrays over window masks only, which is O(2^k) per trial.
    """
    k, p = params.k, params.p
    rule = ksum_rule(params)
    m0 = np.array([1.0])
    m1 = np.array([0.0])
    m2 = np.array([0.0])
    length = 0
    counts = {}
    for i in range(1, n_max + 1):
        if i == 1:
            e = np.array([p])
        else:
            if length not in counts:
                counts[length] = _popcounts(length)
            e = rule(counts[length], length)
        yield i, length, m0, m1, m2, e
        up, down = 1.0 - p, -p  # shift of the centered count for x = 1, 0
        a0, a1, a2 = m0 * e, (m1 + up * m0) * e, (m2 + 2 * up * m1 + up * up * m0) * e
        b0, b1, b2 = (
            m0 * (1.0 - e),
            (m1 + down * m0) * (1.0 - e),
            (m2 + 2 * down * m1 + down * down * m0) * (1.0 - e),
        )
        if length < k:
            m0, m1, m2 = (np.concatenate([b0, a0]), np.concatenate([b1, a1]), np.concatenate([b2, a2]))
            length += 1
        else:
            half = 2 ** (k - 1)
            m0 = np.concatenate([b0.reshape(half, 2).sum(1), a0.reshape(half, 2).sum(1)])
            m1 = np.concatenate([b1.reshape(half, 2).sum(1), a1.reshape(half, 2).sum(1)])
            m2 = np.concatenate([b2.reshape(half, 2).sum(1), a2.reshape(half, 2).sum(1)])
    yield n_max + 1, length, m0, m1, m2, None


def variance_trajectory(params: ModelParams, n_max: int) -> np.ndarray:
    """Exact ``Var(S_n) / n`` for ``n = 1..n_max`` in one forward sweep."""
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    check_budget(params.k, n_max)
    out = np.empty(n_max)
    for i, _, m0, m1, m2, _ in _moment_sweep(params, n_max):
        if i == 1:
            continue
        mass = m0.sum()
        if abs(mass - 1.0) > MASS_TOL:
            raise ArithmeticError(f"probability mass drifted to {mass!r} at n={i - 1}")
        n = i - 1
        out[n - 1] = (m2.sum() - m1.sum() ** 2) / n
    return out


def expected_quad_variation(params: ModelParams, n: int) -> float:
    """Exact ``E<M>_n / n = (1/n) sum_i E[e_{i-1}(1 - e_{i-1})]``."""
    if n > MAX_QUAD_N or params.k > MAX_K:
        raise BudgetExceededError(
            f"quadratic-variation sweep limited to n <= {MAX_QUAD_N}, k <= {MAX_K}",
            2.0**params.k * n,
        )
    total = 0.0
    for _, _, m0, _, _, e in _moment_sweep(params, n):
        if e is None:
            break
        total += float(np.dot(m0, e * (1.0 - e)))
    return total / n


@dataclass(frozen=True)
class MartingaleAudit:
    """Suprema of the conditional moments of ``L_i`` over every reachable
    window state at every step ``i <= n``."""

    params: ModelParams
    n: int
    states_checked: int
    max_abs_mean: float
    max_second: float
    argmax_second_e: float
    max_fourth: float
    argmax_fourth_e: float
    max_polynomial_gap: float
    mean_quad_variation: float
    quad_variation_limit: float

    @property
    def second_ok(self) -> bool:
        return self.max_second <= 0.25 + 1e-12

    @property
    def fourth_ok(self) -> bool:
        return self.max_fourth <= 1.0 / 12.0 + 1e-12

    @property
    def mean_ok(self) -> bool:
        return self.max_abs_mean <= 1e-14

    @property
    def passed(self) -> bool:
        return self.second_ok and self.fourth_ok and self.mean_ok


def fourth_moment_polynomial(e):
    """``E[L^4 | F] = e - 4e^2 + 6e^3 - 3e^4`` for a conditional probability ``e``."""
    return e - 4 * e**2 + 6 * e**3 - 3 * e**4


def lindeberg_bound(n: int, eps: float) -> float:
    """Upper bound ``1 / (12 n eps^2)`` on the normalized Lindeberg sum."""
    return 1.0 / (12.0 * n * eps * eps)


def exact_martingale_audit(params: ModelParams, n: int) -> MartingaleAudit:
    """Enumerate reachable window states and check the martingale-difference
    moment bounds state by state."""
    if params.k > MAX_K or n > MAX_AUDIT_N:
        raise BudgetExceededError(
            f"audit limited to k <= {MAX_K}, n <= {MAX_AUDIT_N}; got k={params.k}, n={n} "
            f"(estimated cost 2^k*n = {2.0**params.k * n:.3e} state visits)",
            2.0**params.k * n,
        )
    states = 0
    max_mean = max_second = max_fourth = gap = 0.0
    arg2 = arg4 = float("nan")
    quad = 0.0
    for i, _, m0, _, _, e in _moment_sweep(params, n):
        if e is None:
            break
        reachable = m0 > 0.0
        ev = e[reachable]
        states += int(ev.size)
        up, down = 1.0 - ev, -ev
        mean = ev * up + (1.0 - ev) * down
        second = ev * up**2 + (1.0 - ev) * down**2
        fourth = ev * up**4 + (1.0 - ev) * down**4
        j = int(np.argmax(second))
        if second[j] > max_second or i == 1:
            max_second, arg2 = float(second[j]), float(ev[j])
        j = int(np.argmax(fourth))
        if fourth[j] > max_fourth or i == 1:
            max_fourth, arg4 = float(fourth[j]), float(ev[j])
        max_mean = max(max_mean, float(np.abs(mean).max()))
        gap = max(gap, float(np.abs(fourth - fourth_moment_polynomial(ev)).max()))
        quad += float(np.dot(m0, e * (1.0 - e)))
    limit = (1.0 - params.theta) ** 2 * sigma2_params(params)
    return MartingaleAudit(
        params, n, states, max_mean, max_second, arg2, max_fourth, arg4, gap, quad / n, limit
    )
