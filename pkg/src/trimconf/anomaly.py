"""Covariate anomaly scores and threshold policies.

Scorers follow the scikit-learn transformer API (``fit`` / ``transform``)
and additionally expose ``anomaly_score`` and ``retained_interval`` so a
scene can compute retention probabilities in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.spatial.distance import pdist
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DomainError
from .numkernel import ceil_rank


@dataclass(frozen=True)
class SteinScoreConfig:
    mu_hat: float
    sigma_hat: float
    bandwidth: float

    def __post_init__(self):
        if not (self.sigma_hat > 0 and self.bandwidth > 0):
            raise DomainError("Stein score needs positive scale and bandwidth")


def stein_score_norm(x, cfg: SteinScoreConfig):
    """Square root of the diagonal Stein kernel with a Gaussian RBF.

    With plug-in score s(x) = -(x - mu) / sigma^2 and k(u, v) =
    exp(-(u - v)^2 / (2 h^2)), the kernel at u = v reduces to
    s(x)^2 + 1 / h^2.
    """
    x = np.asarray(x, dtype=float)
    s = -(x - cfg.mu_hat) / cfg.sigma_hat ** 2
    return np.sqrt(np.maximum(s * s + 1.0 / cfg.bandwidth ** 2, 0.0))


def median_heuristic_bandwidth(values, seed=0, max_points: int = 2000) -> float:
    """Median absolute pairwise difference, on a seeded subsample above ``max_points``."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size < 2 or np.all(v == v[0]):
        raise DomainError("median heuristic needs at least two distinct values")
    if v.size > max_points:
        v = np.random.default_rng(seed).choice(v, size=max_points, replace=False)
    h = float(np.median(pdist(v[:, None], "cityblock")))
    if not h > 0:
        raise DomainError("median pairwise difference is zero")
    return h


def _column(X):
    X = check_array(np.asarray(X, dtype=float).reshape(-1, 1) if np.ndim(X) <= 1 else X)
    if X.shape[1] != 1:
        raise DomainError("this scorer handles one-dimensional covariates")
    return X[:, 0]


class _IntervalScorer(TransformerMixin, BaseEstimator):
    """Scores that are increasing in |x - center|."""

    def transform(self, X):
        return self.anomaly_score(_column(X)).reshape(-1, 1)

    def score_at_radius(self, r):
        raise NotImplementedError

    def radius_at_score(self, t):
        raise NotImplementedError

    def retained_interval(self, t):
        if math.isinf(t) and t > 0:
            return (-math.inf, math.inf)
        r = self.radius_at_score(t)
        if r is None:
            return None
        return (self.center_ - r, self.center_ + r)


class SteinScoreNorm(_IntervalScorer):
    """Stein score-norm anomaly score for one-dimensional covariates.

    Parameters
    ----------
    bandwidth : float or None
        Kernel scale; the median heuristic on the fitting sample when None.
    random_state : int
        Seed for the median-heuristic subsample.
    """

    def __init__(self, bandwidth=None, random_state=0):
        self.bandwidth = bandwidth
        self.random_state = random_state

    def fit(self, X, y=None):
        x = _column(X)
        self.mu_ = float(np.mean(x))
        self.sigma_ = float(np.std(x, ddof=1))
        self.bandwidth_ = (float(self.bandwidth) if self.bandwidth is not None
                           else median_heuristic_bandwidth(x, seed=self.random_state))
        self.center_ = self.mu_
        self.config_ = SteinScoreConfig(self.mu_, self.sigma_, self.bandwidth_)
        return self

    @classmethod
    def from_config(cls, cfg: SteinScoreConfig) -> "SteinScoreNorm":
        est = cls(bandwidth=cfg.bandwidth)
        est.mu_, est.sigma_, est.bandwidth_ = cfg.mu_hat, cfg.sigma_hat, cfg.bandwidth
        est.center_, est.config_ = cfg.mu_hat, cfg
        return est

    def anomaly_score(self, x):
        check_is_fitted(self, "config_")
        return stein_score_norm(x, self.config_)

    def score_at_radius(self, r):
        return math.sqrt((r / self.sigma_ ** 2) ** 2 + 1.0 / self.bandwidth_ ** 2)

    def radius_at_score(self, t):
        floor = 1.0 / self.bandwidth_ ** 2
        if t < 0 or t * t < floor:
            return None
        return self.sigma_ ** 2 * math.sqrt(max(t * t - floor, 0.0))


def mahalanobis_score(x, mu, cov_inverse_factor):
    """(x - mu)^T Sigma^{-1} (x - mu) where Sigma^{-1} = L L^T and L is ``cov_inverse_factor``.

    A single point (scalar or 1-D vector) gives a float; rows of a 2-D
    array give an array.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    pts = np.atleast_1d(x).reshape(1, -1) if single else x
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    L = np.atleast_2d(np.asarray(cov_inverse_factor, dtype=float))
    if pts.shape[1] != mu.size or L.shape != (mu.size, mu.size):
        raise DomainError("dimension mismatch between point, mean and covariance factor")
    z = (pts - mu) @ L
    out = np.einsum("ij,ij->i", z, z)
    return float(out[0]) if single else out


class MahalanobisScore(_IntervalScorer):
    """Squared Mahalanobis distance to the fitted mean."""

    def fit(self, X, y=None):
        X = check_array(np.asarray(X, dtype=float).reshape(-1, 1) if np.ndim(X) <= 1 else X)
        self.mean_ = X.mean(axis=0)
        cov = np.atleast_2d(np.cov(X, rowvar=False))
        self.cov_inverse_factor_ = np.linalg.cholesky(np.linalg.inv(cov))
        self.center_ = float(self.mean_[0]) if self.mean_.size == 1 else None
        return self

    @classmethod
    def from_moments(cls, mean, sd) -> "MahalanobisScore":
        est = cls()
        est.mean_ = np.array([float(mean)])
        est.cov_inverse_factor_ = np.array([[1.0 / float(sd)]])
        est.center_ = float(mean)
        return est

    def anomaly_score(self, x):
        check_is_fitted(self, "mean_")
        x = np.asarray(x, dtype=float)
        if self.mean_.size == 1:
            return (((x - self.mean_[0]) * self.cov_inverse_factor_[0, 0]) ** 2)
        return mahalanobis_score(x, self.mean_, self.cov_inverse_factor_)

    def transform(self, X):
        check_is_fitted(self, "mean_")
        if self.mean_.size == 1:
            return super().transform(X)
        return np.asarray(self.anomaly_score(check_array(X))).reshape(-1, 1)

    def score_at_radius(self, r):
        return (r * self.cov_inverse_factor_[0, 0]) ** 2

    def radius_at_score(self, t):
        if self.mean_.size != 1:
            raise DomainError("closed-form retention is available for one-dimensional covariates only")
        if t < 0:
            return None
        return math.sqrt(t) / self.cov_inverse_factor_[0, 0]


class ConstantScore:
    """Score that ignores the covariate; used for label-based trimming."""

    def __init__(self, value: float):
        self.value = float(value)

    def anomaly_score(self, x):
        return np.full(np.shape(x), self.value)

    def retained_interval(self, t):
        return (-math.inf, math.inf) if self.value <= t else None


_KINDS = ("fixed_population_quantile", "clean_reference_quantile", "explicit", "grid")


@dataclass(frozen=True)
class ThresholdPolicy:
    kind: str
    q: float | None = None
    value: float | None = None
    grid: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown threshold policy {self.kind!r}")
        if self.kind in _KINDS[:2] and not (self.q is not None and 0 < self.q < 1):
            raise DomainError("quantile policies need a level in (0, 1)")
        if self.kind == "explicit" and (self.value is None or math.isnan(self.value)):
            raise DomainError("explicit policy needs a threshold value")
        if self.kind == "grid" and not self.grid:
            raise DomainError("grid policy needs a nonempty list of thresholds")

    @classmethod
    def population(cls, q):
        return cls("fixed_population_quantile", q=q)

    @classmethod
    def reference(cls, q):
        return cls("clean_reference_quantile", q=q)

    @classmethod
    def explicit(cls, t):
        return cls("explicit", value=float(t))

    @classmethod
    def over_grid(cls, values: Sequence[float]):
        return cls("grid", grid=tuple(float(v) for v in values))


def inclusive_quantile(values, q: float) -> float:
    """The ceil(n q)-th smallest value."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    k = min(max(ceil_rank(v.size * q), 1), v.size)
    return float(v[k - 1])


def resolve_threshold(policy: ThresholdPolicy, scorer=None, clean_design=None, reference_sample=None,
                      seed=None, n_draws: int = 1_000_000):
    """Turn a policy into a threshold that does not look at calibration data.

    Population quantiles are solved in closed form when ``clean_design`` is a
    Gaussian design and ``scorer`` is symmetric about its center; otherwise
    they are the inclusive quantile of ``n_draws`` scored clean covariates.
    """
    if policy.kind == "explicit":
        return float(policy.value)
    if policy.kind == "grid":
        return list(policy.grid)
    if policy.kind == "clean_reference_quantile":
        if reference_sample is None or len(reference_sample) < 20:
            raise DomainError("clean reference quantile needs at least 20 reference points")
        return inclusive_quantile(scorer.anomaly_score(np.asarray(reference_sample, dtype=float)), policy.q)
    if clean_design is None:
        raise DomainError("population quantile needs the clean covariate law")
    q = policy.q
    center = getattr(scorer, "center_", None)
    if hasattr(clean_design, "x_mean") and isinstance(scorer, _IntervalScorer) and center is not None:
        from .scene import _gauss_mass

        mx, sx = clean_design.x_mean, clean_design.x_sd

        def excess(r):
            return _gauss_mass(center - r, center + r, mx, sx) - q

        hi = 1.0
        while excess(hi) < 0:
            hi *= 2.0
        r = brentq(excess, 0.0, hi, xtol=1e-14, rtol=1e-15, maxiter=500)
        return scorer.score_at_radius(r)
    if seed is None:
        raise DomainError("sampled population quantiles need an explicit seed")
    x, _ = clean_design.sample(np.random.default_rng(seed), n_draws)
    return inclusive_quantile(scorer.anomaly_score(x), q)
