"""Benchmark error functions and Monte-Carlo diagnostics.

A *snapshot* is any frozen decision rule exposing
``evaluate(X, Y, q) -> (selected, err)`` on arrays of fresh draws; the
runner builds one from its current estimators.  The diagnostics below only
ever read snapshots, never update them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtr, ndtri

from .core import ContractError


class CriticalityError(ValueError):
    """The requested level cannot be reached by the benchmark."""


def _normal_tail(z):
    return ndtr(-np.asarray(z, dtype=float))


def _normal_tail_inv(p):
    return -ndtri(np.asarray(p, dtype=float))


@dataclass(frozen=True)
class RegressionNoise:
    """Benchmark of the rescaled-residual interval under symmetric noise.

    ``tail`` is the upper tail of the noise and ``tail_inv`` its inverse;
    both default to the standard normal.
    """

    tail: Callable = _normal_tail
    tail_inv: Callable = _normal_tail_inv

    def pi0(self, q: float) -> float:
        return pi0_regression(q, self.tail)

    def closed_form_q0(self, alpha: float) -> float:
        return float(1.0 - 2.0 * _normal_tail(self.tail_inv(alpha / 2.0)))


@dataclass
class InformativeW:
    """Benchmark ``1 - E[W | W > q]`` for a limiting selection statistic.

    ``sampler(n, rng)`` draws the statistic.  A sample of size ``mc_n`` is
    drawn once and reused so the estimate is a deterministic, monotone
    function of ``q``.  ``B_star`` is the upper end of the support of W.
    """

    sampler: Callable[[int, np.random.Generator], np.ndarray]
    B_star: float = 1.0
    kappa: float = 0.0
    mc_n: int = 100_000
    seed: int = 0
    _sorted: np.ndarray | None = field(default=None, repr=False)
    _suffix_mean: np.ndarray | None = field(default=None, repr=False)

    def _ensure(self):
        if self._sorted is None:
            if self.mc_n < 1000:
                raise ContractError("mc_n must be >= 1000")
            w = np.sort(np.asarray(self.sampler(self.mc_n, np.random.default_rng(self.seed)), dtype=float))
            self._sorted = w
            # mean of w[i:] for each i
            self._suffix_mean = np.cumsum(w[::-1])[::-1] / np.arange(len(w), 0, -1)

    @property
    def sample(self) -> np.ndarray:
        self._ensure()
        return self._sorted

    @property
    def mean(self) -> float:
        return float(self.sample.mean())

    def pi0(self, q: float) -> float:
        self._ensure()
        i = int(np.searchsorted(self._sorted, q, side="right"))
        if i >= len(self._sorted):
            return 1.0 - self.B_star
        return float(1.0 - self._suffix_mean[i])


BenchmarkFn = RegressionNoise | InformativeW


def pi0_regression(q: float, tail: Callable = _normal_tail) -> float:
    """``2 * Fbar(Phibar^-1((1 - q) / 2))`` on [0, 1]."""
    if not 0.0 <= q <= 1.0:
        raise ContractError(f"q must lie in [0, 1], got {q}")
    if q >= 1.0:
        return 0.0
    return float(2.0 * tail(_normal_tail_inv((1.0 - q) / 2.0)))


def pi0_informative(q: float, sampler, mc_n: int = 100_000, B_star: float = 1.0, seed: int = 0) -> float:
    """Monte-Carlo ``1 - E[W | W > q]``; ``1 - B_star`` if no draw exceeds ``q``."""
    if mc_n < 1000:
        raise ContractError("mc_n must be >= 1000")
    w = np.asarray(sampler(mc_n, np.random.default_rng(seed)), dtype=float)
    above = w[w > q]
    if above.size == 0:
        return 1.0 - B_star
    return float(1.0 - above.mean())


def solve_q0(alpha: float, benchmark: BenchmarkFn, tol: float = 1e-6, max_iter: int = 200) -> float:
    """Bisection for the level-``alpha`` crossing of a nonincreasing benchmark.

    For informative benchmarks the level must satisfy
    ``1 - B_star < alpha < 1 - E[W]``; the root is bracketed in
    ``[kappa, 1 - alpha]``.
    """
    if not 0.0 < alpha < 1.0:
        raise ContractError(f"alpha must lie in (0, 1), got {alpha}")
    if isinstance(benchmark, InformativeW):
        lo_level, hi_level = 1.0 - benchmark.B_star, 1.0 - benchmark.mean
        if not lo_level < alpha < hi_level:
            raise CriticalityError(
                f"level {alpha} unattainable: admissible range is ({lo_level:.4g}, {hi_level:.4g})"
            )
        lo, hi = benchmark.kappa, 1.0 - alpha
    else:
        lo, hi = 0.0, 1.0
    f = lambda q: benchmark.pi0(q) - alpha  # noqa: E731
    flo, fhi = f(lo), f(hi)
    if flo < 0 or fhi > 0:
        raise CriticalityError(f"no crossing of level {alpha} in [{lo}, {hi}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) <= tol and hi - lo <= tol:
            return mid
        if fm > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15:
            break
    return 0.5 * (lo + hi)


def true_lfdr(spec, x) -> np.ndarray | float:
    """``P(Y = 0 | x)`` under a known two-group mixture."""
    p = spec.posterior(x)[:, 0]
    return float(p[0]) if np.ndim(x) == 1 else p


def bstar_testing(spec, mc_n: int = 1_000_000, seed: int = 0) -> float:
    """Monte-Carlo maximum of ``1 - lfdr`` (upper end of the statistic's support)."""
    X, _ = spec.sample(mc_n, np.random.default_rng(seed))
    return float((1.0 - spec.posterior(X)[:, 0]).max())


# --------------------------------------------------------------------------
# Monte-Carlo functionals of a frozen snapshot


def _draw(spec, mc_n: int, rng):
    if mc_n < 1000:
        raise ContractError("mc_n must be >= 1000")
    rng = rng if rng is not None else np.random.default_rng()
    return spec.sample(mc_n, rng)


def ier_from_draws(snapshot, X, Y, q: float) -> tuple[float, int]:
    """Conditional error rate among selected draws and the number selected."""
    sel, err = snapshot.evaluate(X, Y, q)
    k = int(sel.sum())
    if k == 0:
        return 0.0, 0
    return float(np.asarray(err, dtype=float)[sel].mean()), k


def estimate_ier(spec, snapshot, q: float, mc_n: int = 100_000, rng=None) -> float:
    """``E[err | selected]`` at threshold ``q`` over fresh draws; 0 if nothing is selected."""
    X, Y = _draw(spec, mc_n, rng)
    return ier_from_draws(snapshot, X, Y, q)[0]


def estimate_power(spec, snapshot, q: float, mc_n: int = 100_000, rng=None) -> float:
    """Probability of a selected, correct decision; ``E[Y * S]`` for testing."""
    X, Y = _draw(spec, mc_n, rng)
    sel, err = snapshot.evaluate(X, Y, q)
    return float(np.mean(sel * (1.0 - np.asarray(err, dtype=float))))


def diagnostic_dt(spec, snapshot, reference, q: float, mc_n: int = 100_000, rng=None, B: float = 1.0) -> float:
    """``|Pi_snapshot(q) - Pi0(q)|`` for ``q`` in [0, B], else 0.

    ``reference`` is either the true-model snapshot, evaluated on the same
    draws, or a callable benchmark ``q -> Pi0(q)``.
    """
    if not 0.0 <= q <= B:
        return 0.0
    X, Y = _draw(spec, mc_n, rng)
    pi_hat = ier_from_draws(snapshot, X, Y, q)[0]
    pi_ref = reference(q) if callable(reference) and not hasattr(reference, "evaluate") else ier_from_draws(reference, X, Y, q)[0]
    return abs(pi_hat - pi_ref)
