"""Contamination scenes and the law of the retained calibration scores.

A scene pairs a clean and a dirty component with a contamination weight
and a trimming threshold. Each component produces joint draws of the
nonconformity score A and the anomaly score S, and, when it can, the
exact law of A given S <= t.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.special import ndtr

from .exceptions import DegenerateRetention, DomainError, MissingComponent
from .scorelaw import Empirical, FiniteDiscrete, GapGrid, GaussianDesignResidual, Mixture, ScoreLaw, sup_cdf_gap


def _gauss_mass(lo: float, hi: float, mean: float, sd: float) -> float:
    a, b = (lo - mean) / sd, (hi - mean) / sd
    if a > 0:
        return float(ndtr(-a) - ndtr(-b))
    return float(ndtr(b) - ndtr(a))


class Component(ABC):
    """One mixture component of the calibration law, seen through (A, S)."""

    @abstractmethod
    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Joint draws of (A, S)."""

    def retention(self, t: float) -> float:
        raise NotImplementedError

    def score_law(self, t: float = math.inf) -> ScoreLaw | None:
        """Law of A given S <= t, or None when that event has probability zero."""
        raise NotImplementedError

    def dropped_law(self, t: float) -> ScoreLaw | None:
        """Law of A given S > t, or None when that event has probability zero."""
        raise NotImplementedError

    def joint_keep_cdf(self, a, t: float):
        """P(A <= a, S <= t) evaluated directly from the joint law."""
        law = self.score_law(t)
        p = self.retention(t)
        return np.zeros_like(np.asarray(a, dtype=float)) if law is None else p * law.cdf(a)

    @property
    def analytic(self) -> bool:
        return True


class DiscreteComponent(Component):
    """Finite joint law of (A, S) given by atoms and masses."""

    def __init__(self, a: Sequence[float], s: Sequence[float], masses: Sequence[float]):
        self.a = np.asarray(a, dtype=float).ravel()
        self.s = np.asarray(s, dtype=float).ravel()
        self.masses = np.asarray(masses, dtype=float).ravel()
        if not (self.a.size == self.s.size == self.masses.size) or self.a.size == 0:
            raise DomainError("joint atoms need matching A, S and mass arrays")
        if np.any(self.masses < 0) or abs(self.masses.sum() - 1.0) > 1e-9:
            raise DomainError("joint masses must be nonnegative and sum to one")
        self.masses = self.masses / self.masses.sum()

    def sample(self, rng, n):
        k = rng.choice(self.a.size, size=n, p=self.masses)
        return self.a[k], self.s[k]

    def retention(self, t):
        return float(self.masses[self.s <= t].sum())

    def _restricted(self, mask):
        w = self.masses[mask]
        if w.sum() <= 0:
            return None
        return FiniteDiscrete(self.a[mask], w / w.sum())

    def score_law(self, t=math.inf):
        return self._restricted(self.s <= t)

    def dropped_law(self, t):
        return self._restricted(self.s > t)

    def joint_keep_cdf(self, a, t):
        a = np.asarray(a, dtype=float)
        keep = self.s <= t
        hit = self.a[None, :] <= a.reshape(-1, 1)
        return ((hit & keep[None, :]) @ self.masses).reshape(a.shape)


@dataclass(frozen=True)
class GaussianRegressionDesign:
    """X ~ N(x_mean, x_sd), Y = slope X + offset + (noise_base + noise_slope |X|) xi."""

    x_mean: float = 0.0
    x_sd: float = 1.0
    slope: float = 1.0
    offset: float = 0.0
    noise_base: float = 0.6
    noise_slope: float = 0.36

    def sample(self, rng, n):
        x = rng.normal(self.x_mean, self.x_sd, size=n)
        y = self.slope * x + self.offset + (self.noise_base + self.noise_slope * np.abs(x)) * rng.standard_normal(n)
        return x, y


@dataclass(frozen=True)
class LinearBackbone:
    intercept: float = 0.0
    slope: float = 1.0

    def predict(self, x):
        return self.intercept + self.slope * np.asarray(x, dtype=float)


class RegressionComponent(Component):
    """Absolute residual of a linear backbone with a covariate-only anomaly score.

    ``scorer`` must expose ``anomaly_score(x)`` and ``retained_interval(t)``, the
    latter returning the covariate interval {x : S(x) <= t} as (lo, hi),
    or None when it is empty.
    """

    def __init__(self, design: GaussianRegressionDesign, backbone: LinearBackbone, scorer):
        self.design, self.backbone, self.scorer = design, backbone, scorer

    def sample_xy(self, rng, n):
        return self.design.sample(rng, n)

    def scores(self, x, y):
        return np.abs(y - self.backbone.predict(x)), np.asarray(self.scorer.anomaly_score(x), dtype=float)

    def sample(self, rng, n):
        x, y = self.sample_xy(rng, n)
        return self.scores(x, y)

    def _law(self, lo, hi):
        d, b = self.design, self.backbone
        return GaussianDesignResidual(d.x_mean, d.x_sd, d.offset - b.intercept, d.slope - b.slope,
                                      d.noise_base, d.noise_slope, lo, hi)

    def retention(self, t):
        iv = self.scorer.retained_interval(t)
        if iv is None:
            return 0.0
        return _gauss_mass(iv[0], iv[1], self.design.x_mean, self.design.x_sd)

    def score_law(self, t=math.inf):
        iv = self.scorer.retained_interval(t)
        if iv is None or self.retention(t) <= 0:
            return None
        return self._law(*iv)

    def dropped_law(self, t):
        iv = self.scorer.retained_interval(t)
        if iv is None:
            return self._law(-math.inf, math.inf)
        pieces = [(-math.inf, iv[0]), (iv[1], math.inf)]
        laws, w = [], []
        for lo, hi in pieces:
            if lo < hi:
                mass = _gauss_mass(lo, hi, self.design.x_mean, self.design.x_sd)
                if mass > 0:
                    laws.append(self._law(lo, hi))
                    w.append(mass)
        if not w:
            return None
        w = np.asarray(w) / sum(w)
        return laws[0] if len(laws) == 1 else Mixture(w, laws)


@dataclass(frozen=True)
class ContaminationScene:
    """Calibration law (1 - epsilon) P + epsilon Q with trimming rule S <= threshold."""

    clean: Component
    dirty: Component
    epsilon: float
    threshold: float = math.inf

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise DomainError("contamination weight must lie in [0, 1)")
        if math.isnan(self.threshold):
            raise DomainError("threshold must not be NaN")

    def with_threshold(self, t: float) -> "ContaminationScene":
        return ContaminationScene(self.clean, self.dirty, self.epsilon, t)

    def sample_labels(self, rng, m):
        """Dirty indicators for m calibration draws."""
        return rng.random(m) < self.epsilon

    def sample_calibration(self, rng, m):
        """Draw (A, S, dirty) for m calibration points."""
        dirty = self.sample_labels(rng, m)
        a = np.empty(m)
        s = np.empty(m)
        nd = int(dirty.sum())
        a[~dirty], s[~dirty] = self.clean.sample(rng, m - nd)
        if nd:
            a[dirty], s[dirty] = self.dirty.sample(rng, nd)
        return a, s, dirty


@dataclass
class RetainedProfile:
    """Retention probabilities and score laws of the retained calibration law."""

    p_c: float
    p_d: float
    epsilon: float
    law_P: ScoreLaw
    law_R: ScoreLaw
    law_P_keep: ScoreLaw | None
    law_Q_keep: ScoreLaw | None
    law_Q: ScoreLaw | None = None
    threshold: float = math.inf
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def mu_keep(self) -> float:
        return (1.0 - self.epsilon) * self.p_c + self.epsilon * self.p_d

    @property
    def eps_tilde(self) -> float:
        return self.epsilon * self.p_d / self.mu_keep

    @property
    def estimated(self) -> bool:
        return self.metadata.get("mode") == "montecarlo"

    def contaminated_law(self) -> ScoreLaw:
        """Score law of the untrimmed calibration mixture."""
        if self.law_Q is None or self.epsilon == 0:
            return self.law_P
        return Mixture([1.0 - self.epsilon, self.epsilon], [self.law_P, self.law_Q])


@dataclass(frozen=True)
class MonteCarloMode:
    samples: int = 100_000
    seed: int = 0


def _assemble(p_c, p_d, epsilon, law_P, law_Pk, law_Qk, law_Q, t, metadata):
    mu = (1.0 - epsilon) * p_c + epsilon * p_d
    if not mu > 0:
        raise DegenerateRetention("no calibration point survives trimming")
    eps_t = epsilon * p_d / mu
    if law_Qk is None or eps_t == 0:
        law_R = law_Pk
    elif law_Pk is None or eps_t == 1:
        law_R = law_Qk
    else:
        law_R = Mixture([1.0 - eps_t, eps_t], [law_Pk, law_Qk])
    return RetainedProfile(p_c, p_d, epsilon, law_P, law_R, law_Pk, law_Qk, law_Q, t, metadata)


def derive_retained_profile(scene: ContaminationScene, mode: str | MonteCarloMode = "analytic") -> RetainedProfile:
    """Retention probabilities and retained laws of ``scene``.

    ``mode="analytic"`` uses the components' exact laws. A
    :class:`MonteCarloMode` draws ``samples`` points from each component and
    uses empirical laws; standard errors go into ``metadata``.
    """
    t, eps = scene.threshold, scene.epsilon
    if mode == "analytic":
        p_c = 1.0 if math.isinf(t) and t > 0 else scene.clean.retention(t)
        p_d = 1.0 if math.isinf(t) and t > 0 else scene.dirty.retention(t)
        law_P = scene.clean.score_law()
        law_Q = scene.dirty.score_law()
        law_Pk = law_P if p_c == 1.0 and math.isinf(t) else (scene.clean.score_law(t) if p_c > 0 else None)
        law_Qk = law_Q if p_d == 1.0 and math.isinf(t) else (scene.dirty.score_law(t) if p_d > 0 else None)
        return _assemble(p_c, p_d, eps, law_P, law_Pk, law_Qk, law_Q, t, {"mode": "analytic"})
    if not isinstance(mode, MonteCarloMode):
        raise DomainError(f"unknown profile mode {mode!r}")
    if mode.samples < 100_000:
        raise DomainError("Monte Carlo profiles need at least 1e5 draws per component")
    rng = np.random.default_rng(mode.seed)
    a_c, s_c = scene.clean.sample(rng, mode.samples)
    a_d, s_d = scene.dirty.sample(rng, mode.samples)
    kc, kd = s_c <= t, s_d <= t
    n = mode.samples
    p_c, p_d = kc.mean(), kd.mean()
    meta = {
        "mode": "montecarlo",
        "samples": n,
        "clean_retained": int(kc.sum()),
        "dirty_retained": int(kd.sum()),
        "se_p_c": math.sqrt(p_c * (1 - p_c) / n),
        "se_p_d": math.sqrt(p_d * (1 - p_d) / n),
    }
    law_Pk = Empirical(a_c[kc]) if kc.any() else None
    law_Qk = Empirical(a_d[kd]) if kd.any() else None
    return _assemble(float(p_c), float(p_d), eps, Empirical(a_c), law_Pk, law_Qk, Empirical(a_d), t, meta)


def mixture_upper_bound(profile: RetainedProfile, grid: GapGrid | None = None) -> float:
    """(1 - eps_tilde) * clean distortion + eps_tilde * retained-dirty gap, one-sided."""
    if profile.law_P_keep is None:
        raise MissingComponent("clean retention probability is zero")
    delta = sup_cdf_gap(profile.law_P_keep, profile.law_P, "plus", grid)
    if profile.law_Q_keep is None or profile.p_d == 0:
        return delta
    et = profile.eps_tilde
    return (1.0 - et) * delta + et * sup_cdf_gap(profile.law_Q_keep, profile.law_P, "plus", grid)
