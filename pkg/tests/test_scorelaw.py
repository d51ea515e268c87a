import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from oracles import heteroscedastic_residual_cdf
from trimconf.exceptions import DomainError
from trimconf.scorelaw import (Empirical, FiniteDiscrete, Gaussian, GaussianDesignResidual, GapGrid,
                               HalfNormalScaled, Mixture, PiecewiseLinearCDF, evaluation_grid, make_sharpness_pair,
                               sup_cdf_gap, uniform)


def test_finite_discrete_cdf_and_limits():
    law = FiniteDiscrete([2.0, 1.0, 2.0, 3.0], [0.2, 0.3, 0.1, 0.4])
    np.testing.assert_array_equal(law.atoms(), [1.0, 2.0, 3.0])
    np.testing.assert_allclose(law.cdf([0.5, 1.0, 1.5, 2.0, 3.0]), [0, 0.3, 0.3, 0.6, 1.0])
    np.testing.assert_allclose(law.cdf_left([1.0, 2.0, 3.0, 3.5]), [0, 0.3, 0.6, 1.0])
    assert law.cdf(3.0) == 1.0


def test_finite_discrete_lower_quantile_is_generalized_inverse():
    law = FiniteDiscrete([1.0, 2.0, 3.0], [0.3, 0.3, 0.4])
    np.testing.assert_array_equal(law.lower_quantile([1e-9, 0.3, 0.3000001, 0.6, 0.61, 1 - 1e-12]),
                                  [1.0, 1.0, 2.0, 2.0, 3.0, 3.0])
    with pytest.raises(DomainError):
        law.lower_quantile(1.0)


def test_finite_discrete_rejects_bad_masses():
    with pytest.raises(DomainError):
        FiniteDiscrete([1.0, 2.0], [0.5, 0.6])
    with pytest.raises(DomainError):
        FiniteDiscrete([1.0, 2.0], [1.2, -0.2])


def test_empirical_matches_ecdf():
    v = np.array([3.0, 1.0, 2.0, 2.0])
    law = Empirical(v)
    np.testing.assert_allclose(law.cdf([1, 2, 2.5, 3]), [0.25, 0.75, 0.75, 1.0])


def test_piecewise_linear_and_uniform():
    law = PiecewiseLinearCDF([0.0, 1.0, 3.0], [0.0, 0.5, 1.0])
    np.testing.assert_allclose(law.cdf([-1, 0.5, 1.0, 2.0, 4.0]), [0, 0.25, 0.5, 0.75, 1.0])
    assert law.lower_quantile(0.75) == pytest.approx(2.0)
    u = uniform(0.0, 2.0)
    assert u.cdf(0.5) == pytest.approx(0.25)
    with pytest.raises(DomainError):
        PiecewiseLinearCDF([0.0, 0.0, 1.0], [0.0, 0.5, 1.0])


def test_half_normal_and_gaussian_vs_scipy():
    x = np.linspace(0, 5, 30)
    np.testing.assert_allclose(HalfNormalScaled(1.3).cdf(x), stats.halfnorm.cdf(x, scale=1.3), atol=1e-14)
    np.testing.assert_allclose(Gaussian(1.0, 2.0).cdf(x), stats.norm.cdf(x, 1.0, 2.0), atol=1e-14)
    assert HalfNormalScaled(2.0).lower_quantile(0.9) == pytest.approx(stats.halfnorm.ppf(0.9, scale=2.0))


def test_mixture_weights_and_cdf():
    mix = Mixture([0.25, 0.75], [FiniteDiscrete([1.0], [1.0]), uniform(0.0, 2.0)])
    assert mix.cdf(1.0) == pytest.approx(0.25 + 0.375)
    assert mix.cdf_left(1.0) == pytest.approx(0.375)
    assert mix.breakpoints() is not None
    with pytest.raises(DomainError):
        Mixture([0.5, 0.6], [uniform(), uniform()])


@pytest.mark.parametrize("a", [0.1, 0.6, 1.0, 1.6449, 2.5, 4.0])
def test_design_residual_cdf_vs_adaptive_quadrature(a):
    law = GaussianDesignResidual(scale_base=0.6, scale_slope=0.36)
    assert law.cdf(a) == pytest.approx(heteroscedastic_residual_cdf(a), abs=1e-9)


def test_design_residual_with_location_vs_quadrature():
    law = GaussianDesignResidual(loc_intercept=0.3, scale_base=0.6, scale_slope=0.36)
    for a in (0.5, 1.5):
        assert law.cdf(a) == pytest.approx(heteroscedastic_residual_cdf(a, loc=0.3), abs=1e-9)


def test_design_residual_truncated_vs_monte_carlo():
    law = GaussianDesignResidual(scale_base=0.6, scale_slope=0.36, lo=-1.0, hi=1.5)
    rng = np.random.default_rng(3)
    x = rng.standard_normal(2_000_000)
    x = x[(x >= -1.0) & (x <= 1.5)]
    r = np.abs((0.6 + 0.36 * np.abs(x)) * rng.standard_normal(x.size))
    for a in (0.5, 1.0, 2.0):
        p = np.mean(r <= a)
        se = math.sqrt(p * (1 - p) / r.size)
        assert abs(law.cdf(a) - p) < 4 * se


def test_design_residual_sampler_matches_cdf():
    law = GaussianDesignResidual(scale_base=0.6, scale_slope=0.36)
    draws = law.sample(np.random.default_rng(0), 200_000)
    assert stats.kstest(draws, law.cdf).pvalue > 1e-3


def test_generic_quantile_inverts_continuous_cdf():
    law = GaussianDesignResidual(scale_base=0.6, scale_slope=0.36)
    u = np.array([0.01, 0.5, 0.9, 0.999])
    np.testing.assert_allclose(law.cdf(law.lower_quantile(u)), u, atol=1e-12)


def test_gaussian_shift_gap_closed_form():
    delta = 0.4
    got = sup_cdf_gap(Gaussian(0.0, 1.0), Gaussian(delta, 1.0), "plus")
    assert got == pytest.approx(2 * stats.norm.cdf(delta / 2) - 1, abs=1e-8)
    assert sup_cdf_gap(Gaussian(0.0, 1.0), Gaussian(delta, 1.0), "minus") == 0.0


def test_discrete_gap_uses_left_limits():
    M = FiniteDiscrete([1.0, 2.0], [0.5, 0.5])
    N = FiniteDiscrete([1.0, 2.0], [0.2, 0.8])
    assert sup_cdf_gap(M, N, "plus") == pytest.approx(0.3)
    assert sup_cdf_gap(M, N, "minus") == 0.0
    assert sup_cdf_gap(M, N, "two_sided") == pytest.approx(0.3)


@given(d=st.floats(0.0, 1.0))
@settings(max_examples=60, deadline=None)
def test_sharpness_pair_has_gap_d(d):
    R, P = make_sharpness_pair(d)
    assert sup_cdf_gap(R, P, "plus") == pytest.approx(d, abs=1e-12)


@given(w=st.floats(0.0, 1.0), shift=st.floats(-2, 2))
@settings(max_examples=40, deadline=None)
def test_gap_is_bounded_and_antisymmetric(w, shift):
    A = Mixture([w, 1 - w], [uniform(0, 1), uniform(shift + 1, shift + 3)])
    B = uniform(0.0, 2.0)
    plus = sup_cdf_gap(A, B, "plus")
    minus = sup_cdf_gap(B, A, "minus")
    assert 0.0 <= plus <= 1.0
    assert plus == pytest.approx(minus, abs=1e-12)


def test_evaluation_grid_exact_for_breakpoint_laws():
    pts, exact = evaluation_grid([uniform(0, 1), FiniteDiscrete([0.5], [1.0])])
    assert exact
    np.testing.assert_array_equal(pts, [0.0, 0.5, 1.0])
    pts, exact = evaluation_grid([Gaussian()], GapGrid(resolution=11, refine=False))
    assert not exact and pts.size == 11
