import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.linear_model import LinearRegression

from trimconf.anomaly import SteinScoreNorm
from trimconf.conformal import (CalibrationSample, MonteCarloCoverage, TrimmedSplitConformalRegressor,
                                degenerate_count, empirical_coverage, predict_interval, tie_randomized_coverage,
                                trim_and_calibrate)
from trimconf.exceptions import DomainError
from trimconf.scorelaw import FiniteDiscrete, HalfNormalScaled, uniform


def test_cutoff_is_rth_smallest_retained_score():
    a = np.array([5.0, 1.0, 3.0, 2.0, 9.0, 4.0, 0.5, 7.0, 6.0, 8.0, 2.5, 3.5])
    s = np.array([0, 0, 0, 0, 9, 0, 0, 0, 0, 0, 0, 0], dtype=float)
    out = trim_and_calibrate(CalibrationSample(a, s), 1.0, 0.25)
    assert out.n_keep == 11
    # r = ceil(12 * 0.75) = 9
    assert out.r_keep == 9
    assert out.tau_hat == np.sort(np.delete(a, 4))[8]
    assert out.width == 2 * out.tau_hat


def test_no_retained_points_is_degenerate():
    out = trim_and_calibrate(CalibrationSample([1.0, 2.0], [5.0, 6.0]), 1.0, 0.1)
    assert out.degenerate and out.n_keep == 0 and math.isinf(out.tau_hat)
    assert empirical_coverage(out, uniform()) == 1.0
    lo, hi = predict_interval([0.0], out.tau_hat)
    assert lo[0] == -math.inf and hi[0] == math.inf


@pytest.mark.parametrize("alpha,expected", [(0.1, 8), (0.2, 3), (0.05, 18), (0.5, 0), (0.3, 2)])
def test_degenerate_count_threshold(alpha, expected):
    assert degenerate_count(alpha) == expected
    n = expected
    if n > 0:
        out = trim_and_calibrate(CalibrationSample(np.arange(n, dtype=float), np.zeros(n)), 0.0, alpha)
        assert out.degenerate
    out = trim_and_calibrate(CalibrationSample(np.arange(n + 1, dtype=float), np.zeros(n + 1)), 0.0, alpha)
    assert not out.degenerate


def test_validation_errors():
    with pytest.raises(DomainError):
        CalibrationSample([1.0, 2.0], [1.0])
    with pytest.raises(DomainError):
        trim_and_calibrate(CalibrationSample([1.0], [0.0]), 0.0, 1.0)
    with pytest.raises(DomainError):
        CalibrationSample([1.0], [0.0], dirty=[True, False])


@given(seed=st.integers(0, 10_000), a1=st.floats(0.02, 0.5), a2=st.floats(0.02, 0.5))
@settings(max_examples=100, deadline=None)
def test_cutoff_monotone_in_alpha_and_scores(seed, a1, a2):
    rng = np.random.default_rng(seed)
    a = rng.exponential(size=40)
    s = rng.random(40)
    lo, hi = min(a1, a2), max(a1, a2)
    sample = CalibrationSample(a, s)
    assert trim_and_calibrate(sample, 0.8, lo).tau_hat >= trim_and_calibrate(sample, 0.8, hi).tau_hat
    # raising every score pointwise cannot lower the cutoff
    bumped = CalibrationSample(a + rng.exponential(size=40), s)
    assert trim_and_calibrate(bumped, 0.8, lo).tau_hat >= trim_and_calibrate(sample, 0.8, lo).tau_hat


@given(seed=st.integers(0, 10_000), alpha=st.floats(0.02, 0.5))
@settings(max_examples=100, deadline=None)
def test_cutoff_invariant_to_permutation(seed, alpha):
    rng = np.random.default_rng(seed)
    a, s = rng.exponential(size=30), rng.random(30)
    perm = rng.permutation(30)
    o1 = trim_and_calibrate(CalibrationSample(a, s), 0.7, alpha)
    o2 = trim_and_calibrate(CalibrationSample(a[perm], s[perm]), 0.7, alpha)
    assert o1.tau_hat == o2.tau_hat and o1.n_keep == o2.n_keep


def test_monte_carlo_coverage_mode():
    out = trim_and_calibrate(CalibrationSample(np.linspace(0, 2, 50), np.zeros(50)), 0.0, 0.1)
    law = HalfNormalScaled(1.0)
    exact = empirical_coverage(out, law)
    mc = empirical_coverage(out, law, MonteCarloCoverage(200_000, 3))
    assert abs(mc - exact) < 4 * math.sqrt(exact * (1 - exact) / 200_000)
    with pytest.raises(DomainError):
        empirical_coverage(out, law, "bogus")


def test_tie_randomized_coverage_is_exact_on_atoms():
    # all scores tie: plain coverage is 1, the randomized version averages to 1 - alpha-ish
    law = FiniteDiscrete([1.0], [1.0])
    n, alpha = 19, 0.1
    rng = np.random.default_rng(0)
    vals = []
    for _ in range(4000):
        out = trim_and_calibrate(CalibrationSample(np.ones(n), np.zeros(n)), 0.0, alpha, tie_rng=rng)
        assert out.tau_hat == 1.0
        vals.append(tie_randomized_coverage(out, law))
    # the tie-breaker of the r-th of n uniforms has mean r / (n + 1)
    r = 18
    assert np.mean(vals) == pytest.approx(r / (n + 1), abs=4 * 0.05 / math.sqrt(4000))
    plain = trim_and_calibrate(CalibrationSample(np.ones(n), np.zeros(n)), 0.0, alpha)
    with pytest.raises(DomainError):
        tie_randomized_coverage(plain, law)


def test_split_conformal_marginal_coverage_without_trimming():
    # exchangeable clean data: E[coverage] = r / (n + 1) for continuous scores
    n, alpha, reps = 99, 0.1, 4000
    rng = np.random.default_rng(5)
    law = HalfNormalScaled(1.0)
    covs = [empirical_coverage(trim_and_calibrate(CalibrationSample(np.abs(rng.standard_normal(n)), np.zeros(n)),
                                                  math.inf, alpha), law) for _ in range(reps)]
    assert np.mean(covs) == pytest.approx(90 / 100, abs=4 * 0.03 / math.sqrt(reps))


def _data(rng, n):
    x = rng.standard_normal(n)
    return x.reshape(-1, 1), x + 0.5 * rng.standard_normal(n)


def test_regressor_sklearn_api():
    rng = np.random.default_rng(2)
    X, y = _data(rng, 400)
    ols = LinearRegression().fit(X, y)
    scorer = SteinScoreNorm().fit(X[:200])
    Xc, yc = _data(rng, 300)
    t = float(np.quantile(scorer.anomaly_score(Xc[:, 0]), 0.95))
    reg = TrimmedSplitConformalRegressor(ols, scorer, threshold=t, alpha=0.1).fit(Xc, yc)
    assert reg.n_keep_ == int(np.sum(scorer.anomaly_score(Xc[:, 0]) <= t))
    iv = reg.predict_interval(Xc[:5])
    np.testing.assert_allclose(iv[:, 1] - iv[:, 0], 2 * reg.tau_)
    np.testing.assert_allclose(reg.predict(Xc[:5]), ols.predict(Xc[:5]))
    Xt, yt = _data(rng, 5000)
    assert 0.8 < reg.coverage(Xt, yt) < 0.97
    params = clone(reg).get_params()
    assert params["threshold"] == t and params["alpha"] == 0.1


def test_regressor_accepts_precomputed_scores_and_checks_inputs():
    rng = np.random.default_rng(3)
    X, y = _data(rng, 100)
    ols = LinearRegression().fit(X, y)
    s = np.zeros(100)
    s[:10] = 5.0
    reg = TrimmedSplitConformalRegressor(ols, threshold=1.0).fit(X, y, anomaly_scores=s)
    assert reg.n_keep_ == 90
    with pytest.raises(ValueError):
        TrimmedSplitConformalRegressor(ols, threshold=1.0).fit(X, y)
    with pytest.raises(ValueError):
        TrimmedSplitConformalRegressor(threshold=1.0).fit(X, y, anomaly_scores=s)
    reg = TrimmedSplitConformalRegressor(ols).fit(X[:, 0], y)
    assert reg.n_keep_ == 100
