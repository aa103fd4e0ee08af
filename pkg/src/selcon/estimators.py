"""Online plug-in estimators.

All three models are refreshed from data strictly before the current time
step; the runner is responsible for calling ``update`` only after the
step's decision has been made.
"""

from __future__ import annotations

import copy
import math

import numpy as np
from scipy.special import ndtr

from .core import ContractError


class UntrainedClassError(RuntimeError):
    """A class has no observations, so its likelihood is undefined."""


class SingularDesignError(np.linalg.LinAlgError):
    pass


# --------------------------------------------------------------------------
# Gaussian naive Bayes


class GaussianNB:
    """Streaming Gaussian naive Bayes with per-class Welford moments.

    Variances are unbiased sample variances floored at ``var_floor``; a class
    seen once has variance ``var_floor``.  Priors are class frequencies.

    Parameters
    ----------
    n_features : int
        Covariate dimension.
    n_classes : int
        Number of labels, taken to be ``0..n_classes-1``.
    var_floor : float
        Lower bound on every per-feature variance.
    """

    def __init__(self, n_features: int, n_classes: int = 2, var_floor: float = 1e-6):
        self.n_features = n_features
        self.n_classes = n_classes
        self.var_floor = var_floor
        self.counts = np.zeros(n_classes, dtype=np.int64)
        self.means = np.zeros((n_classes, n_features))
        self._m2 = np.zeros((n_classes, n_features))

    def copy(self) -> "GaussianNB":
        return copy.deepcopy(self)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def priors(self) -> np.ndarray:
        n = self.total
        if n == 0:
            return np.full(self.n_classes, 1.0 / self.n_classes)
        return self.counts / n

    @property
    def variances(self) -> np.ndarray:
        c = self.counts[:, None]
        raw = np.divide(self._m2, c - 1, out=np.zeros_like(self._m2), where=c > 1)
        return np.maximum(raw, self.var_floor)

    def raw_variances(self) -> np.ndarray:
        """Sample variances before flooring (NaN for classes with < 2 points)."""
        c = self.counts[:, None].astype(float)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(c > 1, self._m2 / (c - 1), np.nan)

    def update(self, x, y: int) -> "GaussianNB":
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.n_features:
            raise ContractError(f"expected {self.n_features} features, got {x.shape[0]}")
        if not 0 <= y < self.n_classes:
            raise ContractError(f"label {y} outside 0..{self.n_classes - 1}")
        self.counts[y] += 1
        delta = x - self.means[y]
        self.means[y] += delta / self.counts[y]
        self._m2[y] += delta * (x - self.means[y])
        return self

    def fit(self, X, Y) -> "GaussianNB":
        for x, y in zip(np.asarray(X, dtype=float), np.asarray(Y)):
            self.update(x, int(y))
        return self

    def _check_trained(self):
        if np.any(self.counts == 0):
            missing = np.flatnonzero(self.counts == 0).tolist()
            raise UntrainedClassError(f"no observations for classes {missing}")

    def joint_log_likelihood(self, X) -> np.ndarray:
        self._check_trained()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        var = self.variances
        with np.errstate(divide="ignore"):
            log_prior = np.log(self.priors)
        # (n, K): sum over features of log N(x_f; mean_kf, var_kf)
        quad = ((X[:, None, :] - self.means[None, :, :]) ** 2 / var[None, :, :]).sum(axis=2)
        norm = np.log(2.0 * np.pi * var).sum(axis=1)
        return log_prior[None, :] - 0.5 * (quad + norm[None, :])

    def predict_proba(self, X) -> np.ndarray:
        """Posterior class probabilities, one row per covariate row."""
        jll = self.joint_log_likelihood(X)
        jll = jll - jll.max(axis=1, keepdims=True)
        p = np.exp(jll)
        return p / p.sum(axis=1, keepdims=True)


def gnb_update(model: GaussianNB, x, y: int) -> GaussianNB:
    return model.update(x, y)


def gnb_posterior(model: GaussianNB, x) -> np.ndarray:
    """Posterior vector at a single covariate.

    ``max`` of the result is the classification statistic and component 0
    is the estimated local false discovery rate.
    """
    return model.predict_proba(np.asarray(x, dtype=float).reshape(1, -1))[0]


# --------------------------------------------------------------------------
# Nadaraya-Watson kernel regression


class KernelRegressor:
    """Gaussian-kernel Nadaraya-Watson estimates of the conditional mean and
    standard deviation.

    The bandwidth shrinks with the sample size as ``h0 * n**(-1/(2+d))``.
    ``max_points`` keeps only the most recent points when set.
    """

    def __init__(self, h0: float = 1.0, sigma_min: float = 1e-3, max_points: int | None = None):
        self.h0 = h0
        self.sigma_min = sigma_min
        self.max_points = max_points
        self._X: np.ndarray | None = None
        self._Y = np.empty(0)
        self._n = 0

    def copy(self) -> "KernelRegressor":
        new = copy.copy(self)
        if self._X is not None:
            new._X = self._X[: self._n].copy()
        new._Y = self._Y[: self._n].copy()
        return new

    @property
    def n(self) -> int:
        return self._n

    @property
    def X(self) -> np.ndarray:
        return self._X[: self._n]

    @property
    def Y(self) -> np.ndarray:
        return self._Y[: self._n]

    def bandwidth(self) -> float:
        d = self._X.shape[1] if self._X is not None else 1
        return self.h0 * max(self._n, 1) ** (-1.0 / (2.0 + d))

    def update(self, x, y: float) -> "KernelRegressor":
        x = np.asarray(x, dtype=float).reshape(-1)
        if self._X is None:
            self._X = np.empty((16, x.shape[0]))
            self._Y = np.empty(16)
        if self._n == len(self._Y):
            self._X = np.concatenate([self._X, np.empty_like(self._X)])
            self._Y = np.concatenate([self._Y, np.empty_like(self._Y)])
        self._X[self._n] = x
        self._Y[self._n] = y
        self._n += 1
        if self.max_points is not None and self._n > 2 * self.max_points:
            keep = self.max_points
            self._X[:keep] = self._X[self._n - keep : self._n]
            self._Y[:keep] = self._Y[self._n - keep : self._n]
            self._n = keep
        return self

    def fit(self, X, Y) -> "KernelRegressor":
        for x, y in zip(np.asarray(X, dtype=float), np.asarray(Y, dtype=float)):
            self.update(x, y)
        return self

    def _stored(self) -> tuple[np.ndarray, np.ndarray]:
        n = self._n
        if self.max_points is not None and n > self.max_points:
            return self._X[n - self.max_points : n], self._Y[n - self.max_points : n]
        return self._X[:n], self._Y[:n]

    def predict(self, X, chunk: int = 4096) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized ``(mu_hat, sigma_hat)`` for the rows of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        m = X.shape[0]
        if self._n == 0:
            return np.zeros(m), np.ones(m)
        Xs, Ys = self._stored()
        h = self.bandwidth()
        mu = np.empty(m)
        sig = np.empty(m)
        for s in range(0, m, chunk):
            Q = X[s : s + chunk]
            d2 = ((Q[:, None, :] - Xs[None, :, :]) ** 2).sum(axis=2)
            w = np.exp(-0.5 * d2 / (h * h))
            wsum = w.sum(axis=1)
            ok = wsum > 0
            mu_c = np.where(ok, (w @ Ys) / np.where(ok, wsum, 1.0), Ys.mean())
            resid2 = (Ys[None, :] - mu_c[:, None]) ** 2
            var_c = np.where(ok, (w * resid2).sum(axis=1) / np.where(ok, wsum, 1.0), 1.0)
            mu[s : s + chunk] = mu_c
            sig[s : s + chunk] = np.where(ok, np.sqrt(np.maximum(var_c, self.sigma_min**2)), 1.0)
        return mu, sig


def kr_predict(model: KernelRegressor, x) -> tuple[float, float]:
    mu, sig = model.predict(np.asarray(x, dtype=float).reshape(1, -1))
    return float(mu[0]), float(sig[0])


# --------------------------------------------------------------------------
# ridge AR(d)


def lagged_design(history, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``(y_{t-1}, ..., y_{t-d})`` and targets ``y_t`` for ``t = d..n-1``."""
    y = np.asarray(history, dtype=float)
    n = len(y)
    X = np.column_stack([y[d - k : n - k] for k in range(1, d + 1)])
    return X, y[d:]


def _ridge_solve(G: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    if G.shape[0] == 1:
        a = float(G[0, 0]) + lam
        if a == 0.0:
            raise SingularDesignError("normal matrix is singular; use lambda > 0")
        return np.array([float(b[0]) / a])
    A = G + lam * np.eye(G.shape[0])
    if lam == 0 and np.linalg.matrix_rank(A) < A.shape[0]:
        raise SingularDesignError("normal matrix is singular; use lambda > 0")
    try:
        return np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularDesignError(str(exc)) from exc


def ar_fit(history, d: int, lam: float = 0.0) -> np.ndarray:
    """Ridge least-squares AR coefficients on the lagged design."""
    if d < 1:
        raise ContractError("AR order must be >= 1")
    if len(history) <= d:
        raise ContractError(f"need more than {d} observations, got {len(history)}")
    X, y = lagged_design(history, d)
    return _ridge_solve(X.T @ X, X.T @ y, lam)


class ArEstimator:
    """Running normal equations for a ridge AR(d) fit.

    Refitting is an exact ``d x d`` solve on the accumulated Gram matrix, so
    it agrees with :func:`ar_fit` on the same history.
    """

    def __init__(self, d: int, lam: float = 1e-6):
        if d < 1:
            raise ContractError("AR order must be >= 1")
        self.d = d
        self.lam = lam
        self.G = np.zeros((d, d))
        self.b = np.zeros(d)
        self.n = 0
        self.phi = np.zeros(d)

    def update(self, x, y: float) -> "ArEstimator":
        x = np.asarray(x, dtype=float)
        if self.d == 1:
            self.G[0, 0] += x[0] * x[0]
            self.b[0] += x[0] * y
            self.n += 1
            return self
        self.G += np.outer(x, x)
        self.b += x * y
        self.n += 1
        return self

    def fit_history(self, history) -> "ArEstimator":
        X, y = lagged_design(history, self.d)
        self.G += X.T @ X
        self.b += X.T @ y
        self.n += len(y)
        return self.refit()

    def refit(self) -> "ArEstimator":
        if self.n == 0:
            return self
        try:
            self.phi = _ridge_solve(self.G, self.b, self.lam)
        except SingularDesignError:
            pass  # keep the previous coefficients until the design is informative
        return self

    def predict(self, x) -> float:
        return float(np.dot(self.phi, x))


# --------------------------------------------------------------------------
# scores


def adaptive_residual_score(mu_hat: float, sigma_hat: float, y: float, B: float = 1.0) -> float:
    """Rescaled absolute residual ``2B * Phi(|y - mu| / sigma) - B``."""
    if not sigma_hat > 0:
        raise ContractError(f"sigma_hat must be positive, got {sigma_hat}")
    r = abs(y - mu_hat) / sigma_hat
    return 2.0 * B * (0.5 * math.erfc(-r / math.sqrt(2.0))) - B


def adaptive_residual_scores(mu_hat, sigma_hat, y, B: float = 1.0) -> np.ndarray:
    r = np.abs(np.asarray(y) - np.asarray(mu_hat)) / np.asarray(sigma_hat)
    return 2.0 * B * ndtr(r) - B
