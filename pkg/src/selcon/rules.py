"""Prediction sets, selection rules and error functions.

Prediction sets are a small closed family so that containment is exact:
closed intervals (a point is a zero-length interval), finite label sets,
rays ``[lo, inf)`` / ``(lo, inf)``, the full outcome space and the empty set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtri

from .core import ContractError

_N = NormalDist()


# --------------------------------------------------------------------------
# prediction sets


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def contains(self, y) -> bool:
        return self.lo <= y <= self.hi

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class LabelSet:
    labels: frozenset

    def contains(self, y) -> bool:
        return y in self.labels

    @property
    def length(self) -> float:
        return float(len(self.labels))


@dataclass(frozen=True)
class Ray:
    """``[lo, inf)`` when ``closed`` else ``(lo, inf)``."""

    lo: float
    closed: bool = True

    def contains(self, y) -> bool:
        return y >= self.lo if self.closed else y > self.lo

    @property
    def length(self) -> float:
        return math.inf


@dataclass(frozen=True)
class FullSet:
    def contains(self, y) -> bool:
        return True

    @property
    def length(self) -> float:
        return math.inf


@dataclass(frozen=True)
class EmptySet:
    def contains(self, y) -> bool:
        return False

    @property
    def length(self) -> float:
        return 0.0


PredictionSet = Interval | LabelSet | Ray | FullSet | EmptySet

FULL = FullSet()
EMPTY = EmptySet()


def regression_interval(mu_hat: float, sigma_hat: float, q: float, B: float = 1.0) -> PredictionSet:
    """Sublevel set of the rescaled-residual score.

    ``[mu +- sigma * Phi^-1((q + B) / 2B)]`` for ``q`` in (0, B), the point
    ``{mu}`` for ``q <= 0`` and the whole line for ``q >= B``.
    """
    if not sigma_hat > 0:
        raise ContractError(f"sigma_hat must be positive, got {sigma_hat}")
    if q <= 0:
        return Interval(mu_hat, mu_hat)
    p = (q + B) / (2.0 * B)
    if q >= B or p >= 1.0:  # p rounds to 1 just below B
        return FULL
    half = sigma_hat * _N.inv_cdf(p)
    return Interval(mu_hat - half, mu_hat + half)


def regression_halfwidth(sigma_hat, q: float, B: float = 1.0):
    """Vectorized half-width of :func:`regression_interval`; ``inf`` for q >= B."""
    if q <= 0:
        return np.zeros_like(np.asarray(sigma_hat, dtype=float))
    if q >= B:
        return np.full_like(np.asarray(sigma_hat, dtype=float), np.inf)
    return np.asarray(sigma_hat, dtype=float) * ndtri((q + B) / (2.0 * B))


def lower_bound(mu_hat: float, q: float) -> float:
    """``mu + Phi^-1(1 - q)``, with the limits +inf at q <= 0 and -inf at q >= 1."""
    if q <= 0 or 1.0 - q >= 1.0:  # 1 - q rounds to 1 for tiny q
        return math.inf
    if q >= 1:
        return -math.inf
    return mu_hat + _N.inv_cdf(1.0 - q)


def lower_bound_ray(mu_hat: float, q: float) -> PredictionSet:
    lb = lower_bound(mu_hat, q)
    if lb == math.inf:
        return EMPTY
    if lb == -math.inf:
        return FULL
    return Ray(lb)


def classify_point(posteriors: Sequence[float]) -> int:
    """Most probable label; ties go to the smallest index."""
    p = np.asarray(posteriors, dtype=float)
    if p.size == 0:
        raise ContractError("empty posterior vector")
    if p.size < 2:
        raise ContractError("need at least two classes")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ContractError(f"posteriors sum to {p.sum()}, not 1")
    return int(np.argmax(p))  # argmax returns the first maximizer


# --------------------------------------------------------------------------
# selection rules


@dataclass(frozen=True)
class AllSelect:
    def __call__(self, x, q: float, stat: float | None = None) -> bool:
        return True

    def mask(self, X, q: float, stat=None) -> np.ndarray:
        return np.ones(len(X), dtype=bool)


@dataclass(frozen=True)
class RegionSelect:
    """Select when the covariate falls in a fixed region.

    ``region`` is a predicate on a single covariate vector; ``region_mask``
    optionally gives its vectorized form over rows.
    """

    region: Callable[[np.ndarray], bool]
    region_mask: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, x, q: float, stat: float | None = None) -> bool:
        return bool(self.region(x))

    def mask(self, X, q: float, stat=None) -> np.ndarray:
        if self.region_mask is not None:
            return np.asarray(self.region_mask(X), dtype=bool)
        return np.array([bool(self.region(x)) for x in X], dtype=bool)


def box_region(lo: float, hi: float, coord: int = 0) -> RegionSelect:
    """Region ``lo <= x[coord] <= hi``; empty when ``lo > hi``."""
    return RegionSelect(
        region=lambda x: lo <= x[coord] <= hi,
        region_mask=lambda X: (np.asarray(X)[:, coord] >= lo) & (np.asarray(X)[:, coord] <= hi),
    )


@dataclass(frozen=True)
class AdaptiveMean:
    """Select when the current mean estimate reaches ``y0``."""

    y0: float

    def __call__(self, x, q: float, stat: float | None = None) -> bool:
        return stat >= self.y0

    def mask(self, X, q: float, stat=None) -> np.ndarray:
        return np.asarray(stat) >= self.y0


@dataclass(frozen=True)
class Informative:
    """``1{W(x) > q}``; always selects when ``q < 0`` since ``W >= 0``."""

    def __call__(self, x, q: float, stat: float | None = None) -> bool:
        return q < 0 or stat > q

    def mask(self, X, q: float, stat=None) -> np.ndarray:
        if q < 0:
            return np.ones(len(np.asarray(stat)), dtype=bool)
        return np.asarray(stat) > q


SelectionRule = AllSelect | RegionSelect | AdaptiveMean | Informative


def select(rule: SelectionRule, x, q: float, w_or_mu: float | None = None) -> bool:
    """Selection decision.  ``w_or_mu`` is ``W(x)`` for informative rules and
    the mean estimate for :class:`AdaptiveMean`; other rules ignore it."""
    return bool(rule(x, q, w_or_mu))


# --------------------------------------------------------------------------
# errors


@dataclass(frozen=True)
class Coverage:
    def __call__(self, y, C: PredictionSet) -> float:
        return coverage_error(y, C)


@dataclass(frozen=True)
class WeightedClassification:
    """Label-dependent miss cost ``w_y * 1{y not in C}``."""

    weights: tuple[float, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ContractError("weights must be nonnegative and sum to 1")

    @classmethod
    def uniform(cls, K: int) -> "WeightedClassification":
        return cls(tuple([1.0 / K] * K))

    def __call__(self, y, C: PredictionSet) -> float:
        return coverage_error(y, C, self.weights)


ErrorFunction = Coverage | WeightedClassification


def coverage_error(y, C: PredictionSet, weights: Sequence[float] | None = None) -> float:
    """Miss indicator, optionally weighted by label.

    The full set never errs and the empty set always does, weights or not.
    """
    if isinstance(C, FullSet):
        return 0.0
    if isinstance(C, EmptySet):
        return 1.0
    if C.contains(y):
        return 0.0
    return 1.0 if weights is None else float(weights[int(y)])


def testing_error(y: int) -> int:
    """False discovery indicator for the fixed prediction set ``{1}``."""
    if y not in (0, 1):
        raise ContractError(f"testing outcome must be 0 or 1, got {y}")
    return 1 - int(y)
