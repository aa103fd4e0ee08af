"""Reproducible synthetic streams.

Every spec exposes ``sample(n, rng) -> (X, Y)``.  iid specs draw independent
pairs; :class:`ArProcess` draws a stationary path and returns lagged pairs.
:class:`Stream` wraps a spec and a seed for one-at-a-time draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from . import rules
from .core import ContractError


class NonstationaryError(ValueError):
    pass


def make_rng(seed: int | None) -> np.random.Generator:
    return np.random.default_rng(seed)


_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 output for state ``x`` (used to derive child seeds)."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def replication_seeds(master: int, reps: int) -> list[int]:
    """Seed of replication ``r`` is ``splitmix64(master + r * golden)``."""
    return [splitmix64((master + r * 0x9E3779B97F4A7C15) & _MASK64) for r in range(reps)]


# --------------------------------------------------------------------------
# iid regression


def _default_mu(X: np.ndarray) -> np.ndarray:
    return 2.0 * X[:, 0]


def _unit_sigma(X: np.ndarray) -> np.ndarray:
    return np.ones(len(X))


@dataclass(frozen=True)
class RegressionIid:
    """``Y = mu(X) + sigma(X) * xi`` with ``X ~ U[0,1]^dim`` and standard normal noise.

    ``mu`` and ``sigma`` act on rows of a 2-d array.
    """

    mu: Callable[[np.ndarray], np.ndarray] = _default_mu
    sigma: Callable[[np.ndarray], np.ndarray] = _unit_sigma
    dim: int = 2

    def sample_x(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(0.0, 1.0, size=(n, self.dim))

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        X = self.sample_x(n, rng)
        Y = self.mu(X) + self.sigma(X) * rng.standard_normal(n)
        return X, Y

    def mean(self, X) -> np.ndarray:
        return self.mu(np.atleast_2d(X))

    def std(self, X) -> np.ndarray:
        return self.sigma(np.atleast_2d(X))


# --------------------------------------------------------------------------
# two-component Gaussian mixtures


@dataclass(frozen=True)
class _BinaryMixture:
    p1: float
    mean0: tuple[float, ...]
    mean1: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.mean0)

    def sample_x(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.sample(n, rng)[0]

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        Y = (rng.uniform(size=n) < self.p1).astype(np.int64)
        centers = np.where(Y[:, None] == 1, np.asarray(self.mean1), np.asarray(self.mean0))
        X = centers + rng.standard_normal((n, self.dim))
        return X, Y

    def log_odds(self, X) -> np.ndarray:
        """``log P(Y=1|x) - log P(Y=0|x)`` under identity covariances."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        m0, m1 = np.asarray(self.mean0), np.asarray(self.mean1)
        ll = -0.5 * (((X - m1) ** 2).sum(axis=1) - ((X - m0) ** 2).sum(axis=1))
        with np.errstate(divide="ignore"):
            prior = math.log(self.p1) - math.log1p(-self.p1) if 0 < self.p1 < 1 else (
                math.inf if self.p1 >= 1 else -math.inf
            )
        return ll + prior

    def posterior(self, X) -> np.ndarray:
        """True ``[P(Y=0|x), P(Y=1|x)]`` per row."""
        p1 = expit(self.log_odds(X))
        return np.column_stack([1.0 - p1, p1])


@dataclass(frozen=True)
class ClassifMixture(_BinaryMixture):
    p1: float = 0.5
    mean0: tuple[float, ...] = (0.0, 0.0)
    mean1: tuple[float, ...] = (1.0, 1.0)


@dataclass(frozen=True)
class TestingMixture(_BinaryMixture):
    """Nulls (``Y=0``) at ``mean0``, alternatives (``Y=1``) at ``mean1``."""

    __test__ = False  # not a pytest class

    p1: float = 0.2
    mean0: tuple[float, ...] = (0.0, 0.0)
    mean1: tuple[float, ...] = (3.0, 3.0)


# --------------------------------------------------------------------------
# AR(d)


def check_stationary(phi, margin: float = 1e-6) -> None:
    """Raise unless every root of ``1 - sum phi_k z^k`` lies outside ``|z| <= 1 + margin``."""
    phi = np.asarray(phi, dtype=float)
    coeffs = np.concatenate([-phi[::-1], [1.0]])  # highest degree first
    coeffs = np.trim_zeros(coeffs, "f")
    if len(coeffs) <= 1:
        return
    roots = np.roots(coeffs)
    if np.any(np.abs(roots) <= 1.0 + margin):
        raise NonstationaryError(f"AR polynomial has a root of modulus {np.abs(roots).min():.6g}")


@dataclass(frozen=True)
class ArProcess:
    """Centered AR(d) with unit-variance Gaussian innovations, started at zero."""

    phi: tuple[float, ...] = (0.5,)
    burn_in: int = 1000

    def __post_init__(self):
        if len(self.phi) < 1:
            raise ContractError("AR order must be >= 1")
        check_stationary(self.phi)

    @property
    def d(self) -> int:
        return len(self.phi)

    @property
    def dim(self) -> int:
        return self.d

    def path(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` consecutive observations after burn-in."""
        d = self.d
        phi = np.asarray(self.phi)
        z = rng.standard_normal(self.burn_in + n)
        y = np.zeros(d + self.burn_in + n)
        if d == 1:
            a = phi[0]
            for i in range(self.burn_in + n):
                y[i + 1] = a * y[i] + z[i]
        else:
            rev = phi[::-1]
            for i in range(self.burn_in + n):
                y[i + d] = np.dot(rev, y[i : i + d]) + z[i]
        return y[d + self.burn_in :]

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """``n`` lagged pairs ``x = (y_{t-1}, ..., y_{t-d})``, ``y = y_t``."""
        y = self.path(n + self.d, rng)
        X = np.column_stack([y[self.d - k : len(y) - k] for k in range(1, self.d + 1)])
        return X, y[self.d :]


@dataclass(frozen=True)
class ArConditional:
    """Law of ``Y_t`` given fixed lags ``x``: the sampler for conditional
    Monte-Carlo diagnostics in the AR setting."""

    phi: tuple[float, ...]
    x: tuple[float, ...]

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(self.x, dtype=float)
        X = np.broadcast_to(x, (n, len(x)))
        Y = float(np.dot(self.phi, x)) + rng.standard_normal(n)
        return X, Y


# --------------------------------------------------------------------------
# adversary


@dataclass(frozen=True)
class AdversarialAlwaysErr:
    """Covariates from ``base``; outcomes chosen outside whatever set is emitted."""

    base: object = field(default_factory=RegressionIid)
    side: str = "upper"  # or "nearest": exterior point closest to zero

    def sample_x(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.base.sample_x(n, rng)


def adversarial_outcome(C, n_labels: int | None = None, side: str = "upper"):
    """An outcome outside ``C`` whenever ``C`` has a nonempty complement.

    Intervals get ``hi + 1`` (or the exterior point nearest zero when
    ``side == "nearest"``), rays get ``lo - 1``, label sets get the smallest
    label not in the set.  Full and empty sets get an arbitrary outcome.
    """
    if isinstance(C, rules.Interval):
        if side == "nearest" and abs(C.lo - 1.0) < abs(C.hi + 1.0):
            return C.lo - 1.0
        return C.hi + 1.0
    if isinstance(C, rules.Ray):
        return C.lo - 1.0
    if isinstance(C, rules.LabelSet):
        for k in range(n_labels if n_labels is not None else max(C.labels) + 2):
            if k not in C.labels:
                return k
        return 0
    return 0 if n_labels is not None else 0.0


def adversarial_next(q: float, snapshot, rng: np.random.Generator):
    """Draw ``x`` and an outcome that makes the would-be prediction set miss.

    ``snapshot`` must provide ``draw_x(rng)``, ``prediction_set(x, q)`` and
    ``n_labels`` (``None`` for real-valued outcomes).
    """
    x = snapshot.draw_x(rng)
    C = snapshot.prediction_set(x, q)
    return x, adversarial_outcome(C, snapshot.n_labels, getattr(snapshot, "adversary_side", "upper"))


# --------------------------------------------------------------------------
# convenience


def holdout(spec, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """``n`` labeled pairs available before the stream starts."""
    if n < 0:
        raise ContractError("holdout size must be >= 0")
    if n == 0:
        return np.empty((0, spec.dim)), np.empty(0)
    return spec.sample(n, rng)


class Stream:
    """Seeded one-at-a-time view of a spec (draws are buffered in blocks)."""

    def __init__(self, spec, seed: int | None, block: int = 1024):
        self.spec = spec
        self.seed = seed
        self.rng = make_rng(seed)
        self._block = block
        self._X = np.empty((0, spec.dim))
        self._Y = np.empty(0)
        self._i = 0
        self._ar_lags: np.ndarray | None = None

    def next(self):
        if isinstance(self.spec, ArProcess):
            return self._next_ar()
        if self._i >= len(self._Y):
            self._X, self._Y = self.spec.sample(self._block, self.rng)
            self._i = 0
        x, y = self._X[self._i], self._Y[self._i]
        self._i += 1
        return x, y

    def _next_ar(self):
        if self._ar_lags is None:
            y0 = self.spec.path(self.spec.d, self.rng)
            self._ar_lags = y0[::-1].copy()
        x = self._ar_lags.copy()
        y = float(np.dot(self.spec.phi, x) + self.rng.standard_normal())
        self._ar_lags = np.concatenate([[y], self._ar_lags[:-1]])
        return x, y
