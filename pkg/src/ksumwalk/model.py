"""The k-sum correlated Bernoulli model and its walk presentations.

Trial ``i`` succeeds with probability

    p                                         if i = 1
    (1 - theta) * p + theta * S_{i-1} / (i-1)  if 2 <= i <= k + 1
    (1 - theta) * p + theta * S_{i,k} / k      if i >= k + 2

where ``S_{i,k}`` counts the successes among the previous ``k`` trials.
Since the memory window always holds ``min(i - 1, k)`` outcomes, both
regimes are ``(1 - theta) * p + theta * mean(window)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .rng import PathStream


class InvalidParameterError(ValueError):
    """Raised when model parameters leave the admissible region."""


@dataclass(frozen=True)
class ModelParams:
    """Canonical parameters ``(p, theta, k)``."""

    p: float
    theta: float
    k: int

    def __post_init__(self):
        if not isinstance(self.k, (int, np.integer)) or isinstance(self.k, bool) or self.k < 1:
            raise InvalidParameterError(f"k must be an integer >= 1, got {self.k!r}")
        if not 0.0 < self.p < 1.0:
            raise InvalidParameterError(f"p must satisfy 0 < p < 1, got {self.p!r}")
        if not 0.0 <= self.theta < 1.0:
            raise InvalidParameterError(f"theta must satisfy 0 <= theta < 1, got {self.theta!r}")
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "k", int(self.k))

    @property
    def base(self) -> float:
        """Memoryless part ``(1 - theta) * p`` of every step probability."""
        return (1.0 - self.theta) * self.p

    @property
    def probability_range(self) -> tuple[float, float]:
        return self.base, self.base + self.theta


@dataclass(frozen=True)
class KSum:
    p: float
    theta: float
    k: int


@dataclass(frozen=True)
class Minimal:
    """Finite-memory minimal walk: repeat a uniformly chosen recent step
    with probability ``r`` if it was a success and ``q`` otherwise."""

    r: float
    q: float
    k: int


@dataclass(frozen=True)
class Elephant:
    """Finite-memory elephant walk with +-1 steps; a recalled step is
    repeated with probability ``alpha`` and reversed otherwise."""

    alpha: float
    k: int


ModelKind = Union[KSum, Minimal, Elephant]


def canonical_params(kind: ModelKind) -> ModelParams:
    """Map a model presentation onto its k-sum parameters.

    Minimal(r, q, k) has ``theta = r - q`` and ``p = q / (1 - r + q)``;
    Elephant(alpha, k) has ``theta = 2 alpha - 1`` and ``p = 1/2``.
    """
    if isinstance(kind, ModelParams):
        return kind
    if isinstance(kind, KSum):
        return ModelParams(kind.p, kind.theta, kind.k)
    if isinstance(kind, Minimal):
        r, q = kind.r, kind.q
        if not (0.0 < r < 1.0 and 0.0 < q < 1.0):
            raise InvalidParameterError(f"r and q must lie in (0, 1), got r={r!r}, q={q!r}")
        if not 0.0 <= r - q < 1.0:
            raise InvalidParameterError(f"minimal walk requires 0 <= r - q < 1, got r - q = {r - q!r}")
        return ModelParams(q / (1.0 - r + q), r - q, kind.k)
    if isinstance(kind, Elephant):
        if not 0.5 <= kind.alpha < 1.0:
            raise InvalidParameterError(
                f"elephant walk requires 1/2 <= alpha < 1, got alpha={kind.alpha!r}"
            )
        return ModelParams(0.5, 2.0 * kind.alpha - 1.0, kind.k)
    raise TypeError(f"unknown model kind {type(kind).__name__}")


class WindowState:
    """Most recent ``min(i - 1, k)`` outcomes before trial ``i``.

    Stored as a fixed ring of ``k`` bits plus a running sum, so pushing an
    outcome is O(1).
    """

    __slots__ = ("k", "step_index", "window_sum", "_ring", "_head", "_length")

    def __init__(self, k: int):
        self.k = int(k)
        self.step_index = 1
        self.window_sum = 0
        self._ring = [0] * self.k
        self._head = 0  # slot of the oldest bit once the ring is full
        self._length = 0

    @classmethod
    def from_bits(cls, bits: Sequence[int], step_index: int, k: int) -> "WindowState":
        if len(bits) != min(step_index - 1, k):
            raise ValueError(
                f"window length must be min(i-1, k) = {min(step_index - 1, k)}, got {len(bits)}"
            )
        state = cls(k)
        for b in bits:
            state.push(int(b))
        state.step_index = step_index
        return state

    def __len__(self) -> int:
        return self._length

    @property
    def bits(self) -> list[int]:
        """Window contents, oldest first."""
        if self._length < self.k:
            return self._ring[: self._length]
        return self._ring[self._head:] + self._ring[: self._head]

    def push(self, x: int) -> None:
        if self._length < self.k:
            self._ring[self._length] = x
            self._length += 1
        else:
            self.window_sum -= self._ring[self._head]
            self._ring[self._head] = x
            self._head = (self._head + 1) % self.k
        self.window_sum += x
        self.step_index += 1

    def copy(self) -> "WindowState":
        other = WindowState(self.k)
        other.step_index = self.step_index
        other.window_sum = self.window_sum
        other._ring = list(self._ring)
        other._head = self._head
        other._length = self._length
        return other

    def __repr__(self) -> str:
        return f"WindowState(bits={self.bits}, step_index={self.step_index})"


def step_probability(window: WindowState, params: ModelParams) -> float:
    """Conditional success probability of trial ``window.step_index``."""
    i = window.step_index
    if i == 1:
        return params.p
    return params.base + params.theta * window.window_sum / min(i - 1, params.k)


def step_probability_two_branch(window: WindowState, params: ModelParams) -> float:
    """Reference form with the early and stationary regimes written out."""
    i, k = window.step_index, params.k
    if i == 1:
        return params.p
    if i <= k + 1:
        return (1.0 - params.theta) * params.p + params.theta / (i - 1) * sum(window.bits)
    return (1.0 - params.theta) * params.p + params.theta / k * sum(window.bits)


@dataclass(frozen=True)
class Path:
    outcomes: np.ndarray
    prefix_sums: np.ndarray = field(repr=False)

    @classmethod
    def from_outcomes(cls, outcomes: Sequence[int]) -> "Path":
        x = np.asarray(outcomes, dtype=np.int8)
        if x.ndim != 1 or x.size == 0:
            raise ValueError("a path needs at least one outcome")
        if np.any((x != 0) & (x != 1)):
            raise ValueError("outcomes must be 0 or 1")
        return cls(x, np.cumsum(x, dtype=np.int64))

    @property
    def n(self) -> int:
        return int(self.outcomes.size)

    @property
    def center_of_mass(self) -> float:
        return center_of_mass(self)

    def elephant_positions(self) -> np.ndarray:
        """Positions of the +-1 walk, ``S^E_m = 2 S_m - m``."""
        return 2 * self.prefix_sums - np.arange(1, self.n + 1)


@dataclass(frozen=True)
class MartingalePath:
    increments: np.ndarray
    partial_sums: np.ndarray
    quad_variation: np.ndarray


def simulate_path(params: ModelParams, n: int, stream: PathStream) -> Path:
    """Sample ``n`` trials; trial ``i`` succeeds iff its uniform is below
    the step probability."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    u = stream.uniforms(n)
    window = WindowState(params.k)
    x = np.empty(n, dtype=np.int8)
    for i in range(n):
        bit = 1 if u[i] < step_probability(window, params) else 0
        x[i] = bit
        window.push(bit)
    return Path(x, np.cumsum(x, dtype=np.int64))


def martingale_increments(path: Path, params: ModelParams) -> MartingalePath:
    """Increments ``L_i = X_i - E[X_i | F_{i-1}]``, their sums ``M_n`` and the
    predictable quadratic variation ``<M>_n``."""
    outcomes = np.asarray(path.outcomes)
    if path.prefix_sums.shape != outcomes.shape:
        raise ValueError("outcomes and prefix sums differ in length")
    n = outcomes.size
    e = np.empty(n)
    window = WindowState(params.k)
    for i in range(n):
        e[i] = step_probability(window, params)
        window.push(int(outcomes[i]))
    increments = outcomes - e
    return MartingalePath(increments, np.cumsum(increments), np.cumsum(e * (1.0 - e)))


def center_of_mass(path: Path) -> float:
    """``C_n = (1/n) * sum_{i<=n} S_i`` from an exact integer total."""
    if path.n < 1:
        raise ValueError("center of mass needs n >= 1")
    return int(path.prefix_sums.sum()) / path.n
