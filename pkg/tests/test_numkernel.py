import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from trimconf.exceptions import DomainError
from trimconf.numkernel import (BetaParams, BinomialParams, beta_pdf, beta_quantile, binom_pmf, binom_pmf_cdf,
                                binom_weights, ceil_rank, clopper_pearson_lower, clopper_pearson_upper,
                                conformal_rank, dkw_radius, hoeffding_tail, reg_inc_beta)

shape = st.floats(min_value=0.05, max_value=500.0)
unit = st.floats(min_value=0.0, max_value=1.0)


def test_reg_inc_beta_matches_scipy_on_grid():
    rng = np.random.default_rng(1)
    a = rng.uniform(0.1, 300, 2000)
    b = rng.uniform(0.1, 300, 2000)
    x = rng.uniform(0, 1, 2000)
    np.testing.assert_allclose(reg_inc_beta(x, a, b), special.betainc(a, b, x), rtol=1e-10, atol=1e-13)


@pytest.mark.parametrize("a,b,x", [(9000.5, 1000.5, 0.9), (2880.0, 321.0, 0.897),
                                   (0.3, 7000.0, 1e-5), (5000.0, 3.0, 0.9995)])
def test_reg_inc_beta_large_shapes_vs_mpmath(a, b, x):
    mpmath.mp.dps = 40
    ref = float(mpmath.betainc(a, b, 0, x, regularized=True))
    assert reg_inc_beta(x, a, b) == pytest.approx(ref, rel=1e-9, abs=1e-14)


def test_reg_inc_beta_equal_large_shapes():
    # the front factor carries relative error of order a * eps at shapes near 1e4
    assert reg_inc_beta(0.5, 1e4, 1e4) == pytest.approx(0.5, abs=5e-12)
    assert reg_inc_beta(0.5001, 1e4, 1e4) == pytest.approx(special.betainc(1e4, 1e4, 0.5001), rel=1e-11)


def test_reg_inc_beta_endpoints_and_scalar_type():
    assert reg_inc_beta(0.0, 2.0, 3.0) == 0.0
    assert reg_inc_beta(1.0, 2.0, 3.0) == 1.0
    assert isinstance(reg_inc_beta(0.3, 2.0, 3.0), float)


@pytest.mark.parametrize("x,a,b", [(-0.1, 1, 1), (1.1, 1, 1), (0.5, 0, 1), (0.5, 1, -2), (0.5, math.inf, 1),
                                   (math.nan, 1, 1)])
def test_reg_inc_beta_domain(x, a, b):
    with pytest.raises(DomainError):
        reg_inc_beta(x, a, b)


@given(k=st.integers(0, 2**20), a=shape, b=shape)
@settings(max_examples=200, deadline=None)
def test_reg_inc_beta_reflection(k, a, b):
    x = k / 2**20  # dyadic, so 1 - x is exact
    assert reg_inc_beta(x, a, b) + reg_inc_beta(1.0 - x, b, a) == pytest.approx(1.0, abs=1e-11)


@given(a=shape, b=shape, x=unit, y=unit)
@settings(max_examples=200, deadline=None)
def test_reg_inc_beta_monotone_in_x(a, b, x, y):
    lo, hi = min(x, y), max(x, y)
    assert reg_inc_beta(lo, a, b) <= reg_inc_beta(hi, a, b) + 1e-14


@given(a=st.floats(0.5, 400), b=st.floats(0.5, 400), x=st.floats(0.01, 0.99))
@settings(max_examples=100, deadline=None)
def test_reg_inc_beta_recurrence(a, b, x):
    # I_x(a+1, b) = I_x(a, b) - x^a (1-x)^b / (a B(a, b))
    lhs = reg_inc_beta(x, a + 1, b)
    front = math.exp(a * math.log(x) + b * math.log1p(-x) - math.log(a) - special.betaln(a, b))
    assert lhs == pytest.approx(reg_inc_beta(x, a, b) - front, abs=1e-11)


def test_beta_pdf_and_params():
    x = np.linspace(0.01, 0.99, 50)
    np.testing.assert_allclose(beta_pdf(x, 3.5, 2.0), stats.beta.pdf(x, 3.5, 2.0), rtol=1e-12)
    p = BetaParams(2.0, 6.0)
    assert p.mean == 0.25
    assert p.cdf(0.3) == pytest.approx(stats.beta.cdf(0.3, 2, 6), rel=1e-12)
    with pytest.raises(DomainError):
        BetaParams(0.0, 1.0)


@given(u=st.floats(1e-8, 1 - 1e-8), a=st.floats(0.2, 2000), b=st.floats(0.2, 2000))
@settings(max_examples=150, deadline=None)
def test_beta_quantile_inverts_cdf(u, a, b):
    q = beta_quantile(u, a, b)
    assert 0.0 <= q <= 1.0
    # q is the root up to float resolution: the CDF brackets u across neighbouring doubles
    below = reg_inc_beta(np.nextafter(q, 0.0), a, b)
    above = reg_inc_beta(np.nextafter(q, 1.0), a, b)
    assert below - 1e-9 <= u <= above + 1e-9


def test_beta_quantile_vs_scipy():
    u = np.array([1e-6, 0.025, 0.5, 0.95, 1 - 1e-6])
    for a, b in [(1.0, 1.0), (289.0, 32.0), (0.5, 0.5), (3000.0, 7000.0)]:
        np.testing.assert_allclose(beta_quantile(u, a, b), stats.beta.ppf(u, a, b), rtol=1e-9, atol=1e-13)
    with pytest.raises(DomainError):
        beta_quantile(0.0, 1.0, 1.0)


@pytest.mark.parametrize("m,mu", [(0, 0.3), (1, 0.5), (320, 0.95), (10_000, 0.0057), (100_000, 0.99)])
def test_binomial_pmf_sums_to_one(m, mu):
    k = np.arange(m + 1)
    pmf = binom_pmf(k, m, mu)
    assert abs(pmf.sum() - 1.0) < 1e-12
    np.testing.assert_allclose(pmf, stats.binom.pmf(k, m, mu), rtol=1e-9, atol=1e-300)


def test_binomial_edges_and_cdf():
    assert binom_pmf(0, 5, 0.0) == 1.0
    assert binom_pmf(5, 5, 1.0) == 1.0
    assert binom_pmf(3, 5, 1.0) == 0.0
    pmf, cdf = binom_pmf_cdf(np.array([0, 100, 320]), BinomialParams(320, 0.95))
    np.testing.assert_allclose(cdf, stats.binom.cdf([0, 100, 320], 320, 0.95), rtol=1e-10, atol=1e-300)
    assert BinomialParams(10, 0.2).cdf(10) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        binom_pmf(6, 5, 0.5)
    with pytest.raises(DomainError):
        BinomialParams(5, 1.5)


def test_binom_weights_block_keeps_mass():
    n, w = binom_weights(320, 0.95)
    assert np.all(np.diff(n) == 1)
    assert abs(w.sum() - 1.0) < 1e-12
    assert w.min() >= 1e-15


@given(M=st.integers(0, 200), extra=st.integers(0, 200), beta=st.floats(0.001, 0.5))
@settings(max_examples=150, deadline=None)
def test_clopper_pearson_matches_beta_quantiles(M, extra, beta):
    n = M + extra
    if n == 0:
        return
    lo = clopper_pearson_lower(M, n, beta)
    hi = clopper_pearson_upper(M, n, beta)
    ref_lo = 0.0 if M == 0 else stats.beta.ppf(beta, M, n - M + 1)
    ref_hi = 1.0 if M == n else stats.beta.ppf(1 - beta, M + 1, n - M)
    assert lo == pytest.approx(ref_lo, abs=1e-9)
    assert hi == pytest.approx(ref_hi, abs=1e-9)
    assert lo <= M / n <= hi


@pytest.mark.parametrize("n", [1, 5, 50, 500, 5000])
def test_clopper_pearson_all_hits_closed_form(n):
    assert clopper_pearson_lower(n, n, 0.05) == pytest.approx(0.05 ** (1 / n), abs=1e-10)


def test_clopper_pearson_domain():
    with pytest.raises(DomainError):
        clopper_pearson_lower(5, 4, 0.05)
    with pytest.raises(DomainError):
        clopper_pearson_upper(1, 4, 1.0)


def test_dkw_and_hoeffding():
    assert dkw_radius(100, 0.05) == pytest.approx(math.sqrt(math.log(40) / 200))
    assert dkw_radius(100, 0.05, two_sided=False) == pytest.approx(math.sqrt(math.log(20) / 200))
    assert dkw_radius(100, 0.05, union_count=8) == pytest.approx(math.sqrt(math.log(320) / 200))
    assert hoeffding_tail(100, 0.1) == pytest.approx(math.exp(-2))
    with pytest.raises(DomainError):
        dkw_radius(0, 0.05)


def test_ranks():
    assert ceil_rank(20 * 0.9) == 18
    assert conformal_rank(320, 0.1) == 289
    assert conformal_rank(8, 0.1) == 9
    assert conformal_rank(9, 0.1) == 9
