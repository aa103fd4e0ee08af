import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from selcon import datagen, rules
from selcon.core import ContractError


def test_splitmix64_reference_value():
    # first output of the reference generator seeded with 0
    assert datagen.splitmix64(0) == 0xE220A8397B1DCDAF


def test_replication_seeds_distinct_and_reproducible():
    s = datagen.replication_seeds(7, 100)
    assert len(set(s)) == 100
    assert s == datagen.replication_seeds(7, 100)
    assert s[:3] == datagen.replication_seeds(7, 3)


def test_same_seed_same_stream():
    spec = datagen.TestingMixture()
    a = spec.sample(50, datagen.make_rng(3))
    b = spec.sample(50, datagen.make_rng(3))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_mixture_posterior_matches_bayes_rule(rng):
    spec = datagen.TestingMixture()
    X = rng.normal(size=(20, 2)) * 2
    f0 = multivariate_normal([0, 0], np.eye(2)).pdf(X)
    f1 = multivariate_normal([3, 3], np.eye(2)).pdf(X)
    lfdr = 0.8 * f0 / (0.8 * f0 + 0.2 * f1)
    np.testing.assert_allclose(spec.posterior(X)[:, 0], lfdr, rtol=1e-9, atol=1e-14)


def test_mixture_label_frequency(rng):
    _, Y = datagen.TestingMixture().sample(200_000, rng)
    assert Y.mean() == pytest.approx(0.2, abs=0.005)
    X, Y = datagen.ClassifMixture().sample(200_000, rng)
    np.testing.assert_allclose(X[Y == 1].mean(axis=0), [1, 1], atol=0.02)


def test_degenerate_priors():
    spec = datagen.ClassifMixture(p1=0.0)
    X, Y = spec.sample(100, np.random.default_rng(0))
    assert (Y == 0).all()
    np.testing.assert_allclose(spec.posterior(X)[:, 0], 1.0)


def test_regression_stream(rng):
    spec = datagen.RegressionIid()
    X, Y = spec.sample(100_000, rng)
    assert X.min() >= 0 and X.max() <= 1
    resid = Y - 2 * X[:, 0]
    assert resid.std() == pytest.approx(1.0, abs=0.01)
    np.testing.assert_allclose(spec.mean(X[:3]), 2 * X[:3, 0])


@pytest.mark.parametrize("phi", [(1.0,), (1.2,), (0.5, 0.6)])
def test_nonstationary_rejected(phi):
    with pytest.raises(datagen.NonstationaryError):
        datagen.ArProcess(phi)


def test_ar_needs_order():
    with pytest.raises(ContractError):
        datagen.ArProcess(())


def test_ar_path_statistics(rng):
    y = datagen.ArProcess((0.5,)).path(100_000, rng)
    assert np.corrcoef(y[1:], y[:-1])[0, 1] == pytest.approx(0.5, abs=0.02)
    assert y.var() == pytest.approx(1 / (1 - 0.25), rel=0.03)


def test_ar_zero_phi_is_white_noise(rng):
    X, Y = datagen.ArProcess((0.0,)).sample(50_000, rng)
    assert abs(np.corrcoef(X[:, 0], Y)[0, 1]) < 0.02


def test_ar_lagged_pairs(rng):
    spec = datagen.ArProcess((0.5, 0.2))
    X, Y = spec.sample(10, rng)
    np.testing.assert_array_equal(X[1:, 0], Y[:-1])
    np.testing.assert_array_equal(X[1:, 1], X[:-1, 0])


def test_ar_conditional(rng):
    c = datagen.ArConditional((0.5,), (2.0,))
    X, Y = c.sample(100_000, rng)
    assert (X == 2.0).all()
    assert Y.mean() == pytest.approx(1.0, abs=0.02)


sets = st.one_of(
    st.builds(lambda a, w: rules.Interval(a, a + w), st.floats(-1e6, 1e6), st.floats(0, 1e3)),
    st.builds(lambda lo: rules.Ray(lo), st.floats(-1e6, 1e6)),
    st.builds(lambda lo: rules.Ray(lo, closed=False), st.floats(-1e6, 1e6)),
    st.builds(lambda s: rules.LabelSet(frozenset(s)), st.sets(st.integers(0, 2), max_size=2)),
    st.just(rules.EMPTY),
)


@given(sets, st.sampled_from(["upper", "nearest"]))
def test_adversary_always_misses(C, side):
    y = datagen.adversarial_outcome(C, 3, side)
    assert rules.coverage_error(y, C) == 1.0


def test_adversary_cannot_beat_full_set():
    assert rules.coverage_error(datagen.adversarial_outcome(rules.FULL, None), rules.FULL) == 0.0


def test_adversarial_next(rng):
    class Snap:
        n_labels = None

        def draw_x(self, rng):
            return rng.uniform(size=2)

        def prediction_set(self, x, q):
            return rules.regression_interval(0.0, 1.0, q)

    x, y = datagen.adversarial_next(0.5, Snap(), rng)
    assert x.shape == (2,)
    assert not Snap().prediction_set(x, 0.5).contains(y)
    assert datagen.AdversarialAlwaysErr().sample_x(3, rng).shape == (3, 2)


def test_holdout_sizes(rng):
    X, Y = datagen.holdout(datagen.RegressionIid(), 0, rng)
    assert X.shape == (0, 2) and Y.shape == (0,)
    with pytest.raises(ContractError):
        datagen.holdout(datagen.RegressionIid(), -1, rng)


def test_stream_one_at_a_time():
    s = datagen.Stream(datagen.RegressionIid(), 5, block=4)
    pts = [s.next() for _ in range(10)]
    assert all(p[0].shape == (2,) for p in pts)
    ar = datagen.Stream(datagen.ArProcess((0.5,)), 5)
    (x1, y1), (x2, y2) = ar.next(), ar.next()
    assert x2[0] == y1
