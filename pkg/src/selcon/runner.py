"""Experiment wiring.

Each experiment is a *wiring*: the estimators, selection rule, prediction
set and error function of one application.  :func:`run_wiring` drives any
wiring through the threshold recursion one step at a time, in the order

    decide on (x_t, q_t) with estimators fit on data before t
    -> reveal y_t -> error -> update q -> feed (x_t, y_t) to the estimators

so that every decision is measurable with respect to the past.
"""

from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass, field, replace
from statistics import NormalDist

import numpy as np
from scipy.special import ndtr

from . import datagen, oracle, rules
from .core import ContractError, SciState, StepSchedule, gamma, step, threshold_bounds
from .estimators import ArEstimator, GaussianNB, KernelRegressor, UntrainedClassError
from .metrics import Trace, TraceRecord, summarize

_N = NormalDist()

EXPERIMENTS = ("testing", "classify", "regress", "select_predict", "predict_lb", "ar", "adversarial")
WIRINGS = ("testing", "classify", "regress", "select_predict", "predict_lb", "ar")
MODES = ("adaptive", "fixed", "oracle")

_DEFAULTS = {
    # experiment: (alpha, q1, c, holdout, augment, y0)
    "testing": (0.1, 0.5, 1.0, 100, "unselected", None),
    "classify": (0.1, 0.8, 0.5, 10, "all", None),
    "regress": (0.1, 0.5, 1.0, 50, "all", 1.0),
    "select_predict": (0.2, 0.5, 1.0, 50, "all", 1.0),
    "predict_lb": (0.1, 0.5, 1.0, 50, "all", 0.5),
    "ar": (0.1, 0.5, 1.0, 50, "all", None),
    "adversarial": (0.1, 0.5, 1.0, 50, None, None),
}


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment.

    Fields left as ``None`` take per-experiment defaults in :meth:`resolved`.
    """

    experiment: str = "testing"
    alpha: float | None = None
    q1: float | None = None
    c: float | None = None
    beta: float = 0.75
    horizon: int = 1000
    holdout: int | None = None
    mode: str = "adaptive"
    baseline: bool = False
    seed: int = 0
    reps: int = 1
    ier_stride: int = 50
    mc_n: int = 100_000
    restart_window: int = 200
    restart_q1: float | None = None
    restart_level: float | None = None
    augment: str | None = None
    y0: float | None = None
    selection: str = "all"
    region_lo: float = 0.5
    region_hi: float = 1.0
    ar_phi: tuple[float, ...] = (0.5,)
    ar_lambda: float = 1e-6
    ar_refit_stride: int = 1
    kernel_h0: float = 1.0
    kernel_max_points: int | None = None
    weights: tuple[float, ...] | None = None
    band: float = 0.05
    jobs: int = 1
    wirings: tuple[str, ...] = WIRINGS
    out: str | None = None
    B: float = 1.0

    def resolved(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ContractError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        alpha, q1, c, n, augment, y0 = _DEFAULTS[self.experiment]
        cfg = replace(
            self,
            alpha=alpha if self.alpha is None else self.alpha,
            q1=q1 if self.q1 is None else self.q1,
            c=c if self.c is None else self.c,
            holdout=n if self.holdout is None else self.holdout,
            augment=augment if self.augment is None else self.augment,
            y0=y0 if self.y0 is None else self.y0,
            ar_phi=tuple(float(v) for v in self.ar_phi),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ContractError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.horizon < 1:
            raise ContractError("horizon must be >= 1")
        if not 0.0 <= self.q1 < self.B:
            raise ContractError(f"q1 must lie in [0, B), got {self.q1}")
        if self.restart_q1 is not None and not 0.0 <= self.restart_q1 < self.B:
            raise ContractError("restart_q1 must lie in [0, B)")
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}")
        if self.augment not in (None, "all", "unselected"):
            raise ContractError("augment must be 'all' or 'unselected'")
        if self.holdout < 0 or self.reps < 1:
            raise ContractError("holdout must be >= 0 and reps >= 1")
        if self.selection not in ("all", "region", "adaptive_mean"):
            raise ContractError("selection must be all, region or adaptive_mean")

    @property
    def schedule(self) -> StepSchedule:
        return StepSchedule(self.c, self.beta)

    def as_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# restart


@dataclass
class RestartMonitor:
    """Counts consecutive steps with ``q >= level`` (``B`` when ``level`` is None);
    ``window <= 0`` disables restarts."""

    window: int = 200
    q1: float = 0.5
    level: float | None = None
    frozen_steps: int = 0
    restarts: int = 0


def restart_if_frozen(state: SciState, monitor: RestartMonitor) -> tuple[SciState, bool]:
    """Restart the recursion after ``monitor.window`` consecutive frozen steps.

    A restart resets ``q`` to ``monitor.q1`` and ``J`` to 1 (so the step
    schedule starts over) and keeps the clock.  The caller folds the
    observed history into the holdout.
    """
    if monitor.window <= 0:
        return state, False
    level = state.B if monitor.level is None else monitor.level
    monitor.frozen_steps = monitor.frozen_steps + 1 if state.q >= level else 0
    if monitor.frozen_steps < monitor.window:
        return state, False
    monitor.frozen_steps = 0
    monitor.restarts += 1
    return replace(state, q=monitor.q1, J=1), True


# --------------------------------------------------------------------------
# snapshots (frozen decision rules for Monte-Carlo diagnostics)


@dataclass(frozen=True)
class StatSnapshot:
    """Informative-selection snapshot: ``stat(X)`` is W, ``err(X, Y)`` the error."""

    stat: object
    err: object

    def evaluate(self, X, Y, q):
        W = self.stat(X)
        return rules.Informative().mask(X, q, W), self.err(X, Y)


@dataclass(frozen=True)
class RegressionSnapshot:
    moments: object  # X -> (mu_hat, sigma_hat)
    rule: object
    B: float = 1.0

    def evaluate(self, X, Y, q):
        mu, sig = self.moments(X)
        sel = self.rule.mask(X, q, mu)
        if q >= self.B:
            return sel, np.zeros(len(Y))
        half = rules.regression_halfwidth(sig, q, self.B)
        resid = np.abs(np.asarray(Y) - mu)
        err = resid > half if q > 0 else resid != 0
        return sel, err.astype(float)


@dataclass(frozen=True)
class LowerBoundSnapshot:
    mean: object
    y0: float

    def evaluate(self, X, Y, q):
        mu = self.mean(X)
        if q >= 1:
            return np.zeros(len(Y), dtype=bool), np.zeros(len(Y))
        if q <= 0 or 1.0 - q >= 1.0:
            return np.ones(len(Y), dtype=bool), np.ones(len(Y))
        lb = mu + _N.inv_cdf(1.0 - q)
        return lb > self.y0, (np.asarray(Y) < lb).astype(float)


# --------------------------------------------------------------------------
# wirings


class Wiring:
    """Interface shared by all experiments."""

    informative = False
    n_labels: int | None = None
    adversary_side = "upper"
    B = 1.0

    def __init__(self, spec, mode: str, X0, Y0, augment: str = "all"):
        self.spec = spec
        self.mode = mode
        self.augment = augment
        self.X0, self.Y0 = np.asarray(X0), np.asarray(Y0)
        self._pending: list[tuple] = []  # observed pairs not yet given to the estimator
        self._last_t = 0
        self.aux: dict[str, list] = {}

    # time-ordering guard; active unless python runs with -O
    def _tick(self, t):
        if t is not None:
            assert t > self._last_t, "estimator consulted out of time order"

    def draw_x(self, rng):
        return self.spec.sample_x(1, rng)[0]

    def mc_spec(self, x):
        return self.spec

    def observe(self, x, y, selected: bool, t: int | None = None) -> None:
        if t is not None:
            self._last_t = t
        if self.mode == "adaptive" and (self.augment == "all" or not selected):
            self._learn(x, y)
        else:
            self._pending.append((x, y))

    def fold_history(self) -> None:
        """Give every observed pair to the estimator (restart with a larger holdout)."""
        if self.mode == "oracle":
            self._pending.clear()
            return
        self._pre = None
        for x, y in self._pending:
            self._learn(x, y)
        self._pending.clear()

    def _learn(self, x, y) -> None:  # pragma: no cover - overridden
        pass

    def prediction_set(self, x, q):
        return self.decide(x, q)[1]

    # statistic cache for pre-drawn streams when the estimator cannot change
    _pre = None

    def _stats(self, X):  # pragma: no cover - overridden
        raise NotImplementedError

    def prime(self, X) -> None:
        if self.mode in ("oracle", "fixed"):
            self._pre = self._stats(np.asarray(X))

    def _stat(self, x, t):
        if self._pre is not None and t is not None:
            return self._pre[t - 1]
        return self._stats(np.reshape(x, (1, -1)))[0]


class TestingWiring(Wiring):
    """Online conformal testing: reject when the estimated lfdr is small."""

    __test__ = False
    informative = True
    n_labels = 2

    def __init__(self, spec, mode, X0, Y0, augment="unselected"):
        super().__init__(spec, mode, X0, Y0, augment)
        self.gnb = GaussianNB(spec.dim, 2)
        if mode != "oracle":
            self.gnb.fit(self.X0, self.Y0.astype(int))

    def _learn(self, x, y):
        self.gnb.update(x, int(y))

    def lfdr(self, X) -> np.ndarray:
        if self.mode == "oracle":
            return self.spec.posterior(X)[:, 0]
        try:
            return self.gnb.predict_proba(X)[:, 0]
        except UntrainedClassError:
            return np.ones(len(np.atleast_2d(X)))

    _stats = lfdr

    def decide(self, x, q, t=None):
        self._tick(t)
        w = 1.0 - float(self._stat(x, t))
        return rules.select(rules.Informative(), x, q, w), rules.LabelSet(frozenset({1}))

    def error(self, y, C):
        return float(rules.testing_error(int(y)))

    def snapshot(self):
        model, mode, spec = self.gnb.copy(), self.mode, self.spec

        def stat(X):
            if mode == "oracle":
                return 1.0 - spec.posterior(X)[:, 0]
            try:
                return 1.0 - model.predict_proba(X)[:, 0]
            except UntrainedClassError:
                return np.zeros(len(X))

        return StatSnapshot(stat, lambda X, Y: (np.asarray(Y) == 0).astype(float))


class ClassifyWiring(Wiring):
    """Selective classification with a size-one prediction set."""

    informative = True

    def __init__(self, spec, mode, X0, Y0, augment="all", error_fn=None):
        super().__init__(spec, mode, X0, Y0, augment)
        self.n_labels = 2
        self.gnb = GaussianNB(spec.dim, self.n_labels)
        if mode != "oracle":
            self.gnb.fit(self.X0, self.Y0.astype(int))
        self.error_fn = error_fn or rules.Coverage()

    def _learn(self, x, y):
        self.gnb.update(x, int(y))

    def posteriors(self, X) -> np.ndarray:
        if self.mode == "oracle":
            return self.spec.posterior(X)
        try:
            return self.gnb.predict_proba(X)
        except UntrainedClassError:
            return np.full((len(np.atleast_2d(X)), self.n_labels), 1.0 / self.n_labels)

    _stats = posteriors

    def decide(self, x, q, t=None):
        self._tick(t)
        p = self._stat(x, t)
        k = int(np.argmax(p))
        self.last_posterior = p
        return rules.select(rules.Informative(), x, q, float(p[k])), rules.LabelSet(frozenset({k}))

    def error(self, y, C):
        return self.error_fn(int(y), C)

    def snapshot(self):
        model, mode, spec = self.gnb.copy(), self.mode, self.spec
        weights = getattr(self.error_fn, "weights", None)

        def post(X):
            if mode == "oracle":
                return spec.posterior(X)
            try:
                return model.predict_proba(X)
            except UntrainedClassError:
                return np.full((len(X), 2), 0.5)

        def evaluate(X, Y, q):
            P = post(X)
            yhat = P.argmax(axis=1)
            sel = rules.Informative().mask(X, q, P.max(axis=1))
            miss = (np.asarray(Y) != yhat).astype(float)
            if weights is not None:
                miss = miss * np.asarray(weights)[np.asarray(Y, dtype=int)]
            return sel, miss

        return _FnSnapshot(evaluate)


@dataclass(frozen=True)
class _FnSnapshot:
    fn: object

    def evaluate(self, X, Y, q):
        return self.fn(X, Y, q)


class _MeanModel:
    """Mean/std provider: the true regression functions or a kernel fit."""

    def __init__(self, spec, mode, X0, Y0, h0=1.0, max_points=None):
        self.spec, self.mode = spec, mode
        self.kr = KernelRegressor(h0=h0, max_points=max_points)
        if mode != "oracle":
            self.kr.fit(X0, Y0)

    def moments(self, X):
        if self.mode == "oracle":
            return self.spec.mean(X), self.spec.std(X)
        return self.kr.predict(X)

    def frozen(self):
        if self.mode == "oracle":
            return self.moments
        kr = self.kr.copy()
        return kr.predict


class RegressWiring(Wiring):
    """Two-sided prediction intervals with X-oriented selection."""

    def __init__(self, spec, mode, X0, Y0, augment="all", rule=None, h0=1.0, max_points=None):
        super().__init__(spec, mode, X0, Y0, augment)
        self.model = _MeanModel(spec, mode, X0, Y0, h0, max_points)
        self.rule = rule or rules.AllSelect()

    def _learn(self, x, y):
        self.model.kr.update(x, y)

    def _stats(self, X):
        return np.column_stack(self.model.moments(X))

    def decide(self, x, q, t=None):
        self._tick(t)
        mu, sig = self._stat(x, t)
        mu, sig = float(mu), float(sig)
        return rules.select(self.rule, x, q, mu), rules.regression_interval(mu, sig, q, self.B)

    def error(self, y, C):
        return rules.coverage_error(y, C)

    def snapshot(self):
        return RegressionSnapshot(self.model.frozen(), self.rule, self.B)


class SelectPredictWiring(Wiring):
    """Selection by prediction: discover outcomes above ``y0``."""

    informative = True

    def __init__(self, spec, mode, X0, Y0, augment="all", y0=1.0, h0=1.0, max_points=None):
        super().__init__(spec, mode, X0, Y0, augment)
        self.model = _MeanModel(spec, mode, X0, Y0, h0, max_points)
        self.y0 = y0
        self.C = rules.Ray(y0, closed=False)

    def _learn(self, x, y):
        self.model.kr.update(x, y)

    def _stats(self, X):
        return self.model.moments(X)[0]

    def decide(self, x, q, t=None):
        self._tick(t)
        mu = float(self._stat(x, t))
        w = 1.0 - 0.5 * math.erfc(-(self.y0 - mu) / math.sqrt(2.0))
        return rules.select(rules.Informative(), x, q, w), self.C

    def error(self, y, C):
        return float(y <= self.y0)

    def snapshot(self):
        moments, y0 = self.model.frozen(), self.y0
        return StatSnapshot(
            lambda X: 1.0 - ndtr(y0 - moments(X)[0]),
            lambda X, Y: (np.asarray(Y) <= y0).astype(float),
        )


class PredictLbWiring(Wiring):
    """Selection with a predictive lower bound above ``y0``."""

    informative = True

    def __init__(self, spec, mode, X0, Y0, augment="all", y0=0.5, h0=1.0, max_points=None):
        super().__init__(spec, mode, X0, Y0, augment)
        self.model = _MeanModel(spec, mode, X0, Y0, h0, max_points)
        self.y0 = y0
        self.aux = {"false_discovery": []}

    def _learn(self, x, y):
        self.model.kr.update(x, y)

    def _stats(self, X):
        return self.model.moments(X)[0]

    def decide(self, x, q, t=None):
        self._tick(t)
        mu = float(self._stat(x, t))
        return rules.lower_bound(mu, q) > self.y0, rules.lower_bound_ray(mu, q)

    def error(self, y, C):
        self.aux["false_discovery"].append(float(y <= self.y0))
        return rules.coverage_error(y, C)

    def snapshot(self):
        moments = self.model.frozen()
        return LowerBoundSnapshot(lambda X: moments(X)[0], self.y0)


class ArWiring(Wiring):
    """AR(d) forecasting intervals without selection."""

    adversary_side = "nearest"

    def __init__(self, spec, mode, holdout_path, lam=1e-6, refit_stride=1):
        d = spec.d
        X0, Y0 = _lag_pairs(holdout_path, d)
        super().__init__(spec, mode, X0, Y0, "all")
        self.est = ArEstimator(d, lam)
        self.refit_stride = max(1, int(refit_stride))
        if mode == "oracle":
            self.est.phi = np.asarray(spec.phi, dtype=float)
        elif len(holdout_path) > d:
            self.est.fit_history(holdout_path)
        self.lags = np.asarray(holdout_path[::-1][:d], dtype=float) if len(holdout_path) >= d else np.zeros(d)
        self._since_refit = 0
        self.rule = rules.AllSelect()

    def _learn(self, x, y):
        self.est.update(x, y)
        self._since_refit += 1
        if self._since_refit >= self.refit_stride:
            self.est.refit()
            self._since_refit = 0

    def observe(self, x, y, selected, t=None):
        super().observe(x, y, selected, t)
        self.lags = np.concatenate([[y], self.lags[:-1]])

    def fold_history(self):
        self._pending.clear()

    def prime(self, X):
        pass  # the forecast is a cheap dot product

    def draw_x(self, rng):
        return self.lags.copy()

    def mc_spec(self, x):
        return datagen.ArConditional(tuple(self.spec.phi), tuple(np.asarray(x, dtype=float)))

    def decide(self, x, q, t=None):
        self._tick(t)
        mu = self.est.predict(x)
        return True, rules.regression_interval(mu, 1.0, q, self.B)

    def error(self, y, C):
        return rules.coverage_error(y, C)

    def snapshot(self):
        phi = self.est.phi.copy()
        return RegressionSnapshot(lambda X: (np.asarray(X) @ phi, np.ones(len(X))), self.rule, self.B)


def _lag_pairs(path, d):
    path = np.asarray(path, dtype=float)
    if len(path) <= d:
        return np.empty((0, d)), np.empty(0)
    X = np.column_stack([path[d - k : len(path) - k] for k in range(1, d + 1)])
    return X, path[d:]


# --------------------------------------------------------------------------
# building wirings and streams


def regression_spec() -> datagen.RegressionIid:
    return datagen.RegressionIid()


def stream_spec(cfg: ExperimentConfig, name: str | None = None):
    name = name or cfg.experiment
    if name == "testing":
        return datagen.TestingMixture()
    if name == "classify":
        return datagen.ClassifMixture()
    if name in ("regress", "select_predict", "predict_lb"):
        return regression_spec()
    if name == "ar":
        return datagen.ArProcess(cfg.ar_phi)
    raise ContractError(f"no stream for {name!r}")


def _selection_rule(cfg):
    if cfg.selection == "region":
        return rules.box_region(cfg.region_lo, cfg.region_hi)
    if cfg.selection == "adaptive_mean":
        return rules.AdaptiveMean(cfg.y0)
    return rules.AllSelect()


def build_wiring(cfg: ExperimentConfig, name: str, spec, holdout_rng) -> Wiring:
    """Wiring for experiment ``name`` with its holdout drawn from ``holdout_rng``."""
    kw = dict(h0=cfg.kernel_h0, max_points=cfg.kernel_max_points)
    if name == "ar":
        path = spec.path(cfg.holdout + spec.d, holdout_rng)
        return ArWiring(spec, cfg.mode, path, cfg.ar_lambda, cfg.ar_refit_stride)
    X0, Y0 = datagen.holdout(spec, cfg.holdout, holdout_rng)
    if name == "testing":
        return TestingWiring(spec, cfg.mode, X0, Y0, cfg.augment)
    if name == "classify":
        err = rules.WeightedClassification(tuple(cfg.weights)) if cfg.weights else rules.Coverage()
        return ClassifyWiring(spec, cfg.mode, X0, Y0, cfg.augment, err)
    if name == "regress":
        return RegressWiring(spec, cfg.mode, X0, Y0, cfg.augment, _selection_rule(cfg), **kw)
    if name == "select_predict":
        return SelectPredictWiring(spec, cfg.mode, X0, Y0, cfg.augment, cfg.y0, **kw)
    if name == "predict_lb":
        return PredictLbWiring(spec, cfg.mode, X0, Y0, cfg.augment, cfg.y0, **kw)
    raise ContractError(f"unknown wiring {name!r}")


# --------------------------------------------------------------------------
# the step loop


class PredrawnSource:
    def __init__(self, X, Y):
        self.X, self.Y = X, Y

    def x(self, i, wiring, rng):
        return self.X[i]

    def y(self, i, C, wiring):
        return self.Y[i]


class AdversarialSource:
    """Every emitted set with a nonempty complement misses.

    Covariates come from ``X`` when given (exogenous draws), otherwise from
    the wiring, which is needed when they depend on past outcomes.
    """

    def __init__(self, X=None):
        self.X = X

    def x(self, i, wiring, rng):
        return wiring.draw_x(rng) if self.X is None else self.X[i]

    def y(self, i, C, wiring):
        return datagen.adversarial_outcome(C, wiring.n_labels, wiring.adversary_side)


def run_wiring(
    wiring: Wiring,
    cfg: ExperimentConfig,
    source,
    rng_x=None,
    mc_rng=None,
) -> Trace:
    """Drive ``wiring`` for ``cfg.horizon`` steps.

    Raises ``AssertionError`` if the threshold ever leaves its guaranteed range.
    """
    state = SciState.initial(cfg.alpha, cfg.B, cfg.schedule, cfg.q1)
    monitor = RestartMonitor(cfg.restart_window if wiring.informative else 0,
                             cfg.q1 if cfg.restart_q1 is None else cfg.restart_q1, cfg.restart_level)
    lo, hi = threshold_bounds(state)
    lo, hi = lo - 1e-12, hi + 1e-12
    stride = cfg.ier_stride
    T = cfg.horizon
    sel_col = np.zeros(T, dtype=bool)
    err_col = np.zeros(T)
    q_col = np.empty(T)
    J_col = np.empty(T, dtype=np.int64)
    fcp_col = np.empty(T)
    seg_col = np.zeros(T, dtype=np.int64)
    ier_col = np.full(T, np.nan)
    pow_col = np.full(T, np.nan)
    seg_sel = 0
    seg_err = 0.0
    segment = 0
    for i in range(T):
        t = i + 1
        x = source.x(i, wiring, rng_x)
        q, J = state.q, state.J
        if not lo <= q <= hi:
            raise AssertionError(f"threshold {q} outside [{lo}, {hi}] at t={t}")
        selected, C = wiring.decide(x, q, t)
        if stride and t % stride == 0:
            spec = wiring.mc_spec(x)
            snap = wiring.snapshot()
            if 0.0 <= q <= cfg.B:
                ier_col[i] = oracle.estimate_ier(spec, snap, q, cfg.mc_n, mc_rng)
            pow_col[i] = oracle.estimate_power(spec, snap, q, cfg.mc_n, mc_rng)
        y = source.y(i, C, wiring)
        if selected:
            err = wiring.error(y, C)
            seg_sel += 1
            seg_err += err
            sel_col[i] = True
            err_col[i] = err
        else:
            err = 0.0
        state = step(state, selected, err)
        q_col[i] = q
        J_col[i] = J
        fcp_col[i] = seg_err / max(1, seg_sel)
        seg_col[i] = segment
        wiring.observe(x, y, selected, t)
        state, restarted = restart_if_frozen(state, monitor)
        if restarted:
            wiring.fold_history()
            segment += 1
            seg_sel, seg_err = 0, 0.0
    sched = cfg.schedule
    bound = cfg.alpha + (cfg.B + gamma(sched, 1)) / (J_col * (sched.c * J_col.astype(float) ** (-sched.beta)))
    return Trace(
        t=np.arange(1, T + 1), selected=sel_col, err=err_col, q=q_col, J=J_col, fcp=fcp_col,
        bound=bound, ier=ier_col, power=pow_col, segment=seg_col,
        meta={"final_state_q": state.q, "final_J": state.J},
        extra={k: np.asarray(v) for k, v in wiring.aux.items()},
    )


def _rngs(seed: int):
    """Independent generators for the holdout, the stream and Monte-Carlo."""
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def _run_named(cfg: ExperimentConfig, name: str, seed: int) -> Trace:
    cfg = cfg if cfg.experiment == name else replace(cfg, experiment=name)
    spec = stream_spec(cfg, name)
    r_hold, r_stream, r_mc = _rngs(seed)
    wiring = build_wiring(cfg, name, spec, r_hold)
    if name == "ar":
        X, Y = _ar_stream_after(wiring, spec, cfg.horizon, r_stream)
    else:
        X, Y = spec.sample(cfg.horizon, r_stream)
    wiring.prime(X)
    trace = run_wiring(wiring, cfg, PredrawnSource(X, Y), r_stream, r_mc)
    trace.meta.update(seed=seed, experiment=name, mode=cfg.mode)
    return trace


def _ar_stream_after(wiring: ArWiring, spec, T, rng):
    """Continue the AR path from the holdout's last lags."""
    d = spec.d
    phi = np.asarray(spec.phi)
    lags = wiring.lags.copy()
    z = rng.standard_normal(T)
    X = np.empty((T, d))
    Y = np.empty(T)
    for i in range(T):
        X[i] = lags
        Y[i] = float(phi @ lags) + z[i]
        lags = np.concatenate([[Y[i]], lags[:-1]])
    return X, Y


def run_testing(cfg: ExperimentConfig, seed: int | None = None) -> Trace:
    """Online conformal testing on the two-group Gaussian mixture."""
    return _run_named(cfg.resolved(), "testing", cfg.seed if seed is None else seed)


def run_regress(cfg: ExperimentConfig, seed: int | None = None) -> Trace:
    return _run_named(cfg.resolved(), "regress", cfg.seed if seed is None else seed)


def run_select_predict(cfg: ExperimentConfig, seed: int | None = None) -> Trace:
    return _run_named(cfg.resolved(), "select_predict", cfg.seed if seed is None else seed)


def run_predict_lb(cfg: ExperimentConfig, seed: int | None = None) -> Trace:
    """Lower-bound selection; ``trace.extra['false_discovery']`` holds
    ``1{y <= y0}`` at each selected step."""
    return _run_named(cfg.resolved(), "predict_lb", cfg.seed if seed is None else seed)


def run_ar(cfg: ExperimentConfig, seed: int | None = None) -> Trace:
    return _run_named(cfg.resolved(), "ar", cfg.seed if seed is None else seed)


# --------------------------------------------------------------------------
# classification with the decaying-ACI baseline


def aci_decaying(sets_at, Y, alpha: float, schedule: StepSchedule, q1: float, B: float = 1.0):
    """Decaying-step ACI: update at every step, empty set whenever ``q < 0``.

    ``sets_at(i, q)`` returns the sublevel prediction set at step ``i`` for
    ``q >= 0``.  Returns arrays ``(q_used, err, sets)``.
    """
    T = len(Y)
    q = q1
    qs = np.empty(T)
    errs = np.empty(T)
    sets = []
    for i in range(T):
        qs[i] = q
        C = rules.EMPTY if q < 0 else sets_at(i, q)
        e = rules.coverage_error(Y[i], C)
        q = q + gamma(schedule, i + 1) * (e - alpha)
        errs[i] = e
        sets.append(C)
    return qs, errs, sets


def label_sublevel_set(posterior, q: float, B: float = 1.0):
    """``{y : 1 - pi(y) <= q}`` over labels."""
    if q >= B:
        return rules.FULL
    labels = frozenset(int(k) for k in np.flatnonzero(1.0 - np.asarray(posterior) <= q))
    return rules.LabelSet(labels) if labels else rules.EMPTY


def naive_selection_trace(qs, errs, sets, n_labels: int, cfg: ExperimentConfig) -> Trace:
    """Baseline trace where a step counts as selected iff its set is a singleton."""
    records = []
    k = 0
    e_sum = 0.0
    for i, (q, e, C) in enumerate(zip(qs, errs, sets)):
        size = n_labels if isinstance(C, rules.FullSet) else (0 if isinstance(C, rules.EmptySet) else len(C.labels))
        sel = size == 1
        if sel:
            k += 1
            e_sum += e
        records.append(TraceRecord(i + 1, sel, float(e) if sel else 0.0, float(q), i + 1, e_sum / max(1, k)))
    return Trace.from_records(records)


def run_classify(cfg: ExperimentConfig, seed: int | None = None):
    """Selective classification; with ``cfg.baseline`` returns
    ``(trace, baseline_trace)`` where the baseline is decaying ACI with
    naive singleton selection on the same stream and the same estimator."""
    cfg = cfg.resolved()
    seed = cfg.seed if seed is None else seed
    if not cfg.baseline:
        return _run_named(cfg, "classify", seed)
    spec = stream_spec(cfg, "classify")
    r_hold, r_stream, r_mc = _rngs(seed)
    wiring = build_wiring(cfg, "classify", spec, r_hold)
    X, Y = spec.sample(cfg.horizon, r_stream)
    shadow = None
    if cfg.mode == "adaptive" and cfg.augment != "all":
        shadow = GaussianNB(spec.dim, 2).fit(wiring.X0, wiring.Y0.astype(int))
    posts = []

    class _Recording(PredrawnSource):
        def y(self, i, C, w):
            if shadow is None:
                posts.append(w.last_posterior.copy())
            else:
                try:
                    posts.append(shadow.predict_proba(X[i : i + 1])[0])
                except UntrainedClassError:
                    posts.append(np.full(2, 0.5))
                shadow.update(X[i], int(Y[i]))
            return self.Y[i]

    wiring.prime(X)
    trace = run_wiring(wiring, cfg, _Recording(X, Y), r_stream, r_mc)
    trace.meta.update(seed=seed, experiment="classify", mode=cfg.mode)
    P = np.asarray(posts)
    qs, errs, sets = aci_decaying(lambda i, q: label_sublevel_set(P[i], q, cfg.B), Y, cfg.alpha, cfg.schedule, cfg.q1, cfg.B)
    base = naive_selection_trace(qs, errs, sets, 2, cfg)
    base.meta.update(seed=seed, experiment="classify_aci_baseline")
    return trace, base


# --------------------------------------------------------------------------
# adversarial suite


@dataclass
class AdversarialReport:
    runs: int = 0
    steps: int = 0
    violations: list = field(default_factory=list)  # (wiring, seed, t, kind)
    max_slack: float = math.inf  # min over steps of bound - fcp

    @property
    def ok(self) -> bool:
        return not self.violations


def run_adversarial(cfg: ExperimentConfig, name: str, seed: int) -> Trace:
    """One always-err run of wiring ``name``."""
    cfg = replace(cfg, experiment=name)
    spec = stream_spec(cfg, name)
    r_hold, r_stream, r_mc = _rngs(seed)
    wiring = build_wiring(cfg, name, spec, r_hold)
    X = None
    if name != "ar":
        X = spec.sample_x(cfg.horizon, r_stream)
        wiring.prime(X)
    trace = run_wiring(wiring, cfg, AdversarialSource(X), r_stream, r_mc)
    trace.meta.update(seed=seed, experiment=name, adversarial=True)
    return trace


def check_trace(trace: Trace, cfg: ExperimentConfig, tol: float = 1e-12) -> list[tuple[int, str]]:
    """Steps where the FCP bound or the threshold range fails, segment-wise."""
    bad = []
    over = np.flatnonzero(trace.fcp > trace.bound + tol)
    bad += [(int(trace.t[i]), "fcp") for i in over]
    g1 = cfg.schedule.c
    lo, hi = -cfg.alpha * g1, cfg.B + (1 - cfg.alpha) * g1
    out = np.flatnonzero((trace.q < lo - tol) | (trace.q > hi + tol))
    bad += [(int(trace.t[i]), "threshold") for i in out]
    return bad


def run_adversarial_suite(cfg: ExperimentConfig, seeds=None) -> AdversarialReport:
    """Always-err adversary against every wiring in ``cfg.wirings``."""
    base = replace(cfg, experiment="adversarial").resolved()
    base = replace(base, ier_stride=0)
    seeds = seeds if seeds is not None else datagen.replication_seeds(base.seed, base.reps)
    report = AdversarialReport()
    for name in base.wirings:
        wcfg = replace(base, experiment=name, augment=_DEFAULTS[name][4], y0=_DEFAULTS[name][5] or 1.0)
        for s in seeds:
            try:
                trace = run_adversarial(wcfg, name, s)
            except AssertionError as exc:
                report.violations.append((name, s, -1, str(exc)))
                continue
            report.runs += 1
            report.steps += len(trace)
            report.max_slack = min(report.max_slack, float((trace.bound - trace.fcp).min()))
            report.violations += [(name, s, t, kind) for t, kind in check_trace(trace, wcfg)]
    return report


# --------------------------------------------------------------------------
# references and replication


@functools.lru_cache(maxsize=None)
def _q0_informative(name: str, alpha: float, y0: float | None, mc_n: int = 200_000):
    if name == "testing":
        spec = datagen.TestingMixture()
        sampler = lambda n, rng: 1.0 - spec.posterior(spec.sample(n, rng)[0])[:, 0]  # noqa: E731
    elif name == "classify":
        spec = datagen.ClassifMixture()
        sampler = lambda n, rng: spec.posterior(spec.sample(n, rng)[0]).max(axis=1)  # noqa: E731
    elif name == "select_predict":
        spec = regression_spec()
        sampler = lambda n, rng: 1.0 - ndtr(y0 - spec.mean(spec.sample_x(n, rng)))  # noqa: E731
    else:
        raise KeyError(name)
    bench = oracle.InformativeW(sampler, mc_n=mc_n)
    bench.B_star = float(bench.sample.max())
    return oracle.solve_q0(alpha, bench)


def reference_q0(cfg: ExperimentConfig) -> float | None:
    """Limit of the threshold under the true model, or ``None`` when unattainable."""
    name = cfg.experiment
    try:
        if name in ("regress", "ar"):
            return 1.0 - cfg.alpha
        if name == "predict_lb":
            spec = regression_spec()
            b_star = 1.0 - float(ndtr(cfg.y0 - spec.mean(np.array([[1.0, 1.0]]))[0]))
            return 1.0 - cfg.alpha if 1.0 - cfg.alpha < b_star else None
        return _q0_informative(name, cfg.alpha, cfg.y0)
    except (oracle.CriticalityError, KeyError):
        return None


def run_experiment(cfg: ExperimentConfig, seed: int):
    """Dispatch one replication; returns ``(trace, baseline_trace_or_None)``."""
    cfg = cfg.resolved()
    name = cfg.experiment
    if name == "classify":
        out = run_classify(cfg, seed)
        return out if isinstance(out, tuple) else (out, None)
    runners = {
        "testing": run_testing,
        "regress": run_regress,
        "select_predict": run_select_predict,
        "predict_lb": run_predict_lb,
        "ar": run_ar,
    }
    return runners[name](cfg, seed), None


def summary_row(rep: int, seed: int, trace: Trace, cfg: ExperimentConfig) -> dict:
    s = summarize(trace, reference_q0(cfg), cfg.band)
    return {
        "rep": rep,
        "seed": seed,
        "final_fcp": s.final_fcp,
        "final_q": s.final_q,
        "selection_rate": s.selection_rate,
        "restarts": s.restarts,
        "t_converge": s.t_converge,
    }
