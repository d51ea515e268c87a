"""Split conformal calibration after fixed-threshold trimming."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .exceptions import DomainError
from .numkernel import ceil_rank, conformal_rank
from .scorelaw import ScoreLaw


@dataclass(frozen=True)
class CalibrationSample:
    """Nonconformity scores ``a`` and anomaly scores ``s`` of the calibration points.

    ``dirty`` holds latent contamination labels when they are known, which
    only happens in simulation.
    """

    a: np.ndarray
    s: np.ndarray
    dirty: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).ravel()
        s = np.asarray(self.s, dtype=float).ravel()
        if a.shape != s.shape:
            raise DomainError("nonconformity and anomaly scores must have equal length")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "s", s)
        if self.dirty is not None:
            d = np.asarray(self.dirty, dtype=bool).ravel()
            if d.shape != a.shape:
                raise DomainError("labels must match the number of calibration points")
            object.__setattr__(self, "dirty", d)

    @property
    def m(self) -> int:
        return self.a.size


@dataclass(frozen=True)
class TrimOutcome:
    keep_indices: np.ndarray
    n_keep: int
    r_keep: int | None
    tau_hat: float
    degenerate: bool
    tie_u: float | None = None

    @property
    def width(self) -> float:
        return 2.0 * self.tau_hat


def degenerate_count(alpha: float) -> int:
    """Largest retained count for which the cutoff is +inf."""
    return max(0, ceil_rank(1.0 / alpha) - 2)


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"miscoverage level must lie in (0, 1), got {alpha}")


def trim_and_calibrate(sample: CalibrationSample, t_star: float, alpha: float, tie_rng=None) -> TrimOutcome:
    """Keep points with S <= t_star and return the conformal cutoff of their scores.

    With ``tie_rng`` each retained point gets a uniform tie-breaker and the
    cutoff is the r-th pair in lexicographic (score, tie-breaker) order; its
    tie-breaker is reported as ``tie_u``.
    """
    _check_alpha(alpha)
    keep = np.flatnonzero(sample.s <= t_star)
    n = keep.size
    r = conformal_rank(n, alpha)
    if n == 0 or r >= n + 1:
        return TrimOutcome(keep, n, None, math.inf, True)
    kept = sample.a[keep]
    if tie_rng is None:
        return TrimOutcome(keep, n, r, float(np.partition(kept, r - 1)[r - 1]), False)
    u = tie_rng.random(n)
    k = np.lexsort((u, kept))[r - 1]
    return TrimOutcome(keep, n, r, float(kept[k]), False, float(u[k]))


def predict_interval(x_center, tau_hat: float):
    """Symmetric interval [center - tau, center + tau]; an infinite cutoff gives the whole line."""
    c = np.asarray(x_center, dtype=float)
    return c - tau_hat, c + tau_hat


@dataclass(frozen=True)
class MonteCarloCoverage:
    n_test: int
    seed: int


def empirical_coverage(outcome: TrimOutcome, target: ScoreLaw, mode="exact") -> float:
    """Probability that a fresh target score falls at or below the cutoff."""
    if outcome.degenerate:
        return 1.0
    if mode == "exact":
        return float(target.cdf(outcome.tau_hat))
    if isinstance(mode, MonteCarloCoverage):
        draws = target.sample(np.random.default_rng(mode.seed), mode.n_test)
        return float(np.mean(draws <= outcome.tau_hat))
    raise DomainError(f"unknown coverage mode {mode!r}")


def tie_randomized_coverage(outcome: TrimOutcome, target: ScoreLaw) -> float:
    """Coverage when the test point also carries a uniform tie-breaker."""
    if outcome.degenerate:
        return 1.0
    if outcome.tie_u is None:
        raise DomainError("outcome was computed without tie-breakers")
    lo = float(target.cdf_left(outcome.tau_hat))
    hi = float(target.cdf(outcome.tau_hat))
    return lo + (hi - lo) * outcome.tie_u


class TrimmedSplitConformalRegressor(RegressorMixin, BaseEstimator):
    """Split conformal regressor that drops anomalous calibration points first.

    Parameters
    ----------
    estimator : fitted regressor
        Point predictor; nonconformity is the absolute residual.
    anomaly_scorer : fitted transformer or None
        Maps covariates to anomaly scores. May be omitted when scores are
        passed to :meth:`fit` directly or when ``threshold`` is infinite.
    threshold : float
        Points with anomaly score at most this value are retained.
    alpha : float
        Target miscoverage.
    """

    def __init__(self, estimator=None, anomaly_scorer=None, threshold=math.inf, alpha=0.1):
        self.estimator = estimator
        self.anomaly_scorer = anomaly_scorer
        self.threshold = threshold
        self.alpha = alpha

    def _anomaly(self, X):
        if self.anomaly_scorer is None:
            return np.zeros(X.shape[0])
        if hasattr(self.anomaly_scorer, "anomaly_score"):
            return np.asarray(self.anomaly_scorer.anomaly_score(X[:, 0] if X.shape[1] == 1 else X), dtype=float)
        return np.asarray(self.anomaly_scorer.transform(X), dtype=float).ravel()

    def fit(self, X, y, anomaly_scores=None):
        if self.estimator is None:
            raise ValueError("a fitted point predictor is required")
        _check_alpha(self.alpha)
        X = check_array(X, ensure_2d=False)
        X = X.reshape(-1, 1) if X.ndim == 1 else X
        y = np.asarray(y, dtype=float).ravel()
        check_consistent_length(X, y)
        if anomaly_scores is None:
            if self.anomaly_scorer is None and not (math.isinf(self.threshold) and self.threshold > 0):
                raise ValueError("finite threshold needs anomaly scores or an anomaly scorer")
            s = self._anomaly(X)
        else:
            s = np.asarray(anomaly_scores, dtype=float).ravel()
            check_consistent_length(X, s)
        a = np.abs(y - np.asarray(self.estimator.predict(X), dtype=float).ravel())
        self.outcome_ = trim_and_calibrate(CalibrationSample(a, s), self.threshold, self.alpha)
        self.tau_ = self.outcome_.tau_hat
        self.n_keep_ = self.outcome_.n_keep
        self.degenerate_ = self.outcome_.degenerate
        return self

    def predict(self, X):
        check_is_fitted(self, "outcome_")
        X = check_array(X, ensure_2d=False)
        X = X.reshape(-1, 1) if X.ndim == 1 else X
        return np.asarray(self.estimator.predict(X), dtype=float).ravel()

    def predict_interval(self, X):
        lo, hi = predict_interval(self.predict(X), self.tau_)
        return np.column_stack([lo, hi])

    def coverage(self, X, y) -> float:
        iv = self.predict_interval(X)
        y = np.asarray(y, dtype=float).ravel()
        return float(np.mean((iv[:, 0] <= y) & (y <= iv[:, 1])))
