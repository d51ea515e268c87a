"""One-dimensional score laws and sup-CDF gaps between them.

Every law exposes a right-continuous ``cdf``, its left limit ``cdf_left``,
the lower generalized quantile and seeded sampling. Laws whose CDF is a
step or piecewise-linear function report their ``breakpoints``; gaps
between such laws are computed exactly on the merged breakpoint set.
"""

from __future__ import annotations

import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import truncnorm

from .exceptions import DegenerateRetention, DomainError


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _as_levels(u):
    u = np.asarray(u, dtype=float)
    if np.any(np.isnan(u)) or np.any((u <= 0) | (u >= 1)):
        raise DomainError("quantile levels must lie strictly inside (0, 1)")
    return u


class ScoreLaw(ABC):
    """Law of a real-valued score."""

    @abstractmethod
    def cdf(self, a):
        """P(A <= a), vectorized."""

    def cdf_left(self, a):
        """P(A < a); equals ``cdf`` for laws without atoms."""
        return self.cdf(a)

    @abstractmethod
    def span(self) -> tuple[float, float]:
        """An interval outside which the law has negligible (< 1e-12) mass."""

    def breakpoints(self):
        """Knots between which the CDF is constant or linear, or None."""
        return None

    def atoms(self) -> np.ndarray:
        return np.empty(0)

    @property
    def has_atoms(self) -> bool:
        return self.atoms().size > 0

    def lower_quantile(self, u):
        """inf{a : cdf(a) >= u} by bracketed bisection, snapped to atoms."""
        u = _as_levels(u)
        shape = u.shape
        u = u.ravel()
        lo_s, hi_s = self.span()
        width = max(hi_s - lo_s, 1.0)
        lo = np.full(u.shape, lo_s - width)
        hi = np.full(u.shape, hi_s + width)
        for _ in range(200):
            bad = self.cdf(hi) < u
            if not bad.any():
                break
            hi[bad] += 2 * (hi[bad] - lo[bad])
        for _ in range(200):
            bad = self.cdf(lo) >= u
            if not bad.any():
                break
            lo[bad] -= 2 * (hi[bad] - lo[bad])
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            open_ = (mid > lo) & (mid < hi)
            if not open_.any():
                break
            up = self.cdf(mid) >= u
            hi = np.where(open_ & up, mid, hi)
            lo = np.where(open_ & ~up, mid, lo)
        at = self.atoms()
        if at.size:
            k = np.searchsorted(at, hi, side="right") - 1
            cand = at[np.clip(k, 0, at.size - 1)]
            snap = (k >= 0) & (cand > lo)
            hi = np.where(snap, cand, hi)
        return float(hi[0]) if len(shape) == 0 else hi.reshape(shape)

    def sample(self, seed, n: int) -> np.ndarray:
        rng = _rng(seed)
        return self.lower_quantile(rng.uniform(np.finfo(float).tiny, 1.0, size=n).clip(max=1 - 1e-16))


class Gaussian(ScoreLaw):
    def __init__(self, mean: float = 0.0, sd: float = 1.0):
        if not sd > 0:
            raise DomainError("standard deviation must be positive")
        self.mean, self.sd = float(mean), float(sd)

    def cdf(self, a):
        return ndtr((np.asarray(a, dtype=float) - self.mean) / self.sd)

    def lower_quantile(self, u):
        return self.mean + self.sd * ndtri(_as_levels(u))

    def span(self):
        return self.mean - 7.5 * self.sd, self.mean + 7.5 * self.sd

    def sample(self, seed, n):
        return _rng(seed).normal(self.mean, self.sd, size=n)


class HalfNormalScaled(ScoreLaw):
    """Law of sigma * |xi| with xi standard normal."""

    def __init__(self, sigma: float = 1.0):
        if not sigma > 0:
            raise DomainError("scale must be positive")
        self.sigma = float(sigma)

    def cdf(self, a):
        a = np.asarray(a, dtype=float)
        return np.where(a > 0, 2.0 * ndtr(np.maximum(a, 0) / self.sigma) - 1.0, 0.0)

    def lower_quantile(self, u):
        return self.sigma * ndtri(0.5 + 0.5 * _as_levels(u))

    def span(self):
        return 0.0, 7.5 * self.sigma

    def sample(self, seed, n):
        return self.sigma * np.abs(_rng(seed).standard_normal(n))


class FiniteDiscrete(ScoreLaw):
    def __init__(self, atoms: Sequence[float], masses: Sequence[float]):
        atoms = np.asarray(atoms, dtype=float).ravel()
        masses = np.asarray(masses, dtype=float).ravel()
        if atoms.size == 0 or atoms.shape != masses.shape:
            raise DomainError("atoms and masses must be nonempty and of equal length")
        if np.any(masses < 0) or not np.all(np.isfinite(atoms)):
            raise DomainError("masses must be nonnegative and atoms finite")
        total = masses.sum()
        if abs(total - 1.0) > 1e-9:
            raise DomainError(f"masses must sum to one, got {total!r}")
        keep = masses > 0
        uniq, inv = np.unique(atoms[keep], return_inverse=True)
        merged = np.zeros(uniq.size)
        np.add.at(merged, inv, masses[keep])
        self._atoms = uniq
        self.masses = merged / merged.sum()
        self._cum = np.cumsum(self.masses)
        self._cum[-1] = 1.0

    def atoms(self):
        return self._atoms

    def breakpoints(self):
        return self._atoms

    def cdf(self, a):
        k = np.searchsorted(self._atoms, np.asarray(a, dtype=float), side="right")
        return np.where(k > 0, self._cum[np.maximum(k - 1, 0)], 0.0)

    def cdf_left(self, a):
        k = np.searchsorted(self._atoms, np.asarray(a, dtype=float), side="left")
        return np.where(k > 0, self._cum[np.maximum(k - 1, 0)], 0.0)

    def lower_quantile(self, u):
        u = _as_levels(u)
        k = np.minimum(np.searchsorted(self._cum, u, side="left"), self._atoms.size - 1)
        out = self._atoms[k]
        return float(out) if out.ndim == 0 else out

    def span(self):
        return float(self._atoms[0]), float(self._atoms[-1])

    def sample(self, seed, n):
        return _rng(seed).choice(self._atoms, size=n, p=self.masses)


class Empirical(FiniteDiscrete):
    """Right-continuous step CDF of a sample."""

    def __init__(self, values: Sequence[float]):
        values = np.sort(np.asarray(values, dtype=float).ravel())
        if values.size == 0:
            raise DomainError("empirical law needs at least one value")
        self.values = values
        super().__init__(values, np.full(values.size, 1.0 / values.size))


class PiecewiseLinearCDF(ScoreLaw):
    """Continuous CDF interpolating (knots, levels) linearly."""

    def __init__(self, knots: Sequence[float], levels: Sequence[float]):
        x = np.asarray(knots, dtype=float).ravel()
        f = np.asarray(levels, dtype=float).ravel()
        if x.size < 2 or x.shape != f.shape:
            raise DomainError("need at least two knots with matching levels")
        if np.any(np.diff(x) <= 0):
            raise DomainError("knots must be strictly increasing")
        if np.any(np.diff(f) < 0) or abs(f[0]) > 1e-12 or abs(f[-1] - 1.0) > 1e-12:
            raise DomainError("levels must increase from 0 to 1")
        self.knots = x
        self.levels = np.clip(f, 0.0, 1.0)

    def breakpoints(self):
        return self.knots

    def cdf(self, a):
        return np.interp(np.asarray(a, dtype=float), self.knots, self.levels, left=0.0, right=1.0)

    def lower_quantile(self, u):
        u = _as_levels(u)
        k = np.clip(np.searchsorted(self.levels, u, side="left"), 1, self.knots.size - 1)
        f0, f1 = self.levels[k - 1], self.levels[k]
        x0, x1 = self.knots[k - 1], self.knots[k]
        out = x0 + (u - f0) / (f1 - f0) * (x1 - x0)
        return float(out) if out.ndim == 0 else out

    def span(self):
        return float(self.knots[0]), float(self.knots[-1])


def uniform(lo: float = 0.0, hi: float = 1.0) -> PiecewiseLinearCDF:
    return PiecewiseLinearCDF([lo, hi], [0.0, 1.0])


class Mixture(ScoreLaw):
    def __init__(self, weights: Sequence[float], laws: Sequence[ScoreLaw]):
        w = np.asarray(weights, dtype=float).ravel()
        if w.size != len(laws) or w.size == 0:
            raise DomainError("one weight per component law is required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError("mixture weights must be nonnegative and sum to one")
        keep = w > 0
        self.weights = w[keep]
        self.laws = [law for law, k in zip(laws, keep) if k]

    def cdf(self, a):
        return sum(w * law.cdf(a) for w, law in zip(self.weights, self.laws))

    def cdf_left(self, a):
        return sum(w * law.cdf_left(a) for w, law in zip(self.weights, self.laws))

    def atoms(self):
        parts = [law.atoms() for law in self.laws]
        return np.unique(np.concatenate(parts)) if parts else np.empty(0)

    def breakpoints(self):
        parts = [law.breakpoints() for law in self.laws]
        if any(p is None for p in parts):
            return None
        return np.unique(np.concatenate(parts))

    def span(self):
        spans = [law.span() for law in self.laws]
        return min(s[0] for s in spans), max(s[1] for s in spans)

    def sample(self, seed, n):
        rng = _rng(seed)
        counts = rng.multinomial(n, self.weights)
        draws = np.concatenate([law.sample(rng, int(c)) for law, c in zip(self.laws, counts)])
        return rng.permutation(draws)


class Conditioned(ScoreLaw):
    """Law of A given S <= threshold for a joint sampler of (A, S).

    The acceptance event is kept as a predicate; the CDF is the empirical
    CDF of a reference batch of accepted draws. Rejection sampling stops
    with an error after ``max_attempts`` proposals per batch.
    """

    def __init__(self, joint_sampler: Callable, threshold: float, seed, n_ref: int = 100_000,
                 max_attempts: int = 10_000_000):
        self.joint_sampler = joint_sampler
        self.threshold = float(threshold)
        self.max_attempts = int(max_attempts)
        rng = _rng(seed)
        accepted, tried = self._draw(rng, n_ref)
        self.acceptance = n_ref / tried
        self.reference = Empirical(accepted)

    def predicate(self, s):
        return np.asarray(s) <= self.threshold

    def _draw(self, rng, n):
        out, tried, have = [], 0, 0
        while have < n:
            batch = int(min(max(2 * (n - have), 1024), self.max_attempts - tried))
            if batch <= 0:
                raise DegenerateRetention(
                    f"rejection sampling exceeded {self.max_attempts} attempts with {have} of {n} accepted")
            a, s = self.joint_sampler(rng, batch)
            tried += batch
            a = np.asarray(a)[self.predicate(s)]
            out.append(a)
            have += a.size
        return np.concatenate(out)[:n], tried

    def cdf(self, a):
        return self.reference.cdf(a)

    def cdf_left(self, a):
        return self.reference.cdf_left(a)

    def atoms(self):
        return self.reference.atoms()

    def breakpoints(self):
        return self.reference.breakpoints()

    def lower_quantile(self, u):
        return self.reference.lower_quantile(u)

    def span(self):
        return self.reference.span()

    def sample(self, seed, n):
        return self._draw(_rng(seed), n)[0]


_GL_NODES = 128


class GaussianDesignResidual(ScoreLaw):
    """Law of |c0 + c1 X + (s0 + s1 |X|) xi| for X ~ N(mx, sx) restricted to [lo, hi].

    This is the absolute residual of a linear backbone on a Gaussian
    design with piecewise-linear noise scale. The CDF integrates the
    conditional folded-normal CDF over X by Gauss-Legendre quadrature,
    split where the integrand has kinks.
    """

    def __init__(self, x_mean=0.0, x_sd=1.0, loc_intercept=0.0, loc_slope=0.0, scale_base=1.0,
                 scale_slope=0.0, lo=-np.inf, hi=np.inf):
        if not (x_sd > 0 and scale_base > 0 and scale_slope >= 0):
            raise DomainError("design and noise scales must be positive")
        if not lo < hi:
            raise DomainError("retained covariate interval is empty")
        self.x_mean, self.x_sd = float(x_mean), float(x_sd)
        self.c0, self.c1 = float(loc_intercept), float(loc_slope)
        self.s0, self.s1 = float(scale_base), float(scale_slope)
        self.lo, self.hi = float(lo), float(hi)
        a = max(self.lo, self.x_mean - 12 * self.x_sd)
        b = min(self.hi, self.x_mean + 12 * self.x_sd)
        if not a < b:
            a, b = self.lo, self.hi
        cuts = [a] + sorted(c for c in {0.0, self.x_mean} if a < c < b) + [b]
        gx, gw = np.polynomial.legendre.leggauss(_GL_NODES)
        xs, ws = [], []
        for left, right in zip(cuts[:-1], cuts[1:]):
            half = 0.5 * (right - left)
            xs.append(left + half * (gx + 1.0))
            ws.append(half * gw)
        x = np.concatenate(xs)
        z = (x - self.x_mean) / self.x_sd
        logw = np.log(np.concatenate(ws)) - 0.5 * z * z
        w = np.exp(logw - logw.max())
        self._x = x
        self._w = w / w.sum()
        self._loc = self.c0 + self.c1 * x
        self._scale = self.s0 + self.s1 * np.abs(x)
        self._cache = {}
        self._lock = threading.Lock()

    def cdf(self, a):
        a = np.asarray(a, dtype=float)
        key = None
        if a.size > 64:
            key = (a.shape, hash(a.tobytes()))
            with self._lock:
                hit = self._cache.get(key)
            if hit is not None:
                return hit.copy()
        out = self._cdf(a)
        if key is not None:
            with self._lock:
                if len(self._cache) >= 8:
                    self._cache.pop(next(iter(self._cache)))
                self._cache[key] = out
            out = out.copy()
        return out

    def _cdf(self, a):
        flat = a.ravel()
        out = np.empty(flat.size)
        step = max(1, 4_000_000 // self._x.size)
        for i in range(0, flat.size, step):
            t = np.maximum(flat[i:i + step], 0.0)[:, None]
            cond = ndtr((t - self._loc) / self._scale) - ndtr((-t - self._loc) / self._scale)
            out[i:i + step] = np.where(flat[i:i + step] >= 0, cond @ self._w, 0.0)
        out = np.clip(out, 0.0, 1.0)
        return float(out[0]) if a.ndim == 0 else out.reshape(a.shape)

    def span(self):
        return 0.0, float(np.max(np.abs(self._loc) + 8.5 * self._scale))

    def sample_x(self, rng, n):
        a = (self.lo - self.x_mean) / self.x_sd
        b = (self.hi - self.x_mean) / self.x_sd
        return truncnorm.rvs(a, b, loc=self.x_mean, scale=self.x_sd, size=n, random_state=rng)

    def sample(self, seed, n):
        rng = _rng(seed)
        x = self.sample_x(rng, n)
        return np.abs(self.c0 + self.c1 * x + (self.s0 + self.s1 * np.abs(x)) * rng.standard_normal(n))


# sup-CDF gaps


@dataclass(frozen=True)
class GapGrid:
    """Evaluation grid for sup-CDF gaps.

    ``points`` overrides the automatic choice. Otherwise laws with
    breakpoints use their merged breakpoints (exact) and continuous laws
    use ``resolution`` points over the pooled [q_lo, q_hi] quantile range,
    refined once around the maximizer.
    """

    points: np.ndarray | None = None
    resolution: int = 20001
    q_lo: float = 5e-5
    q_hi: float = 0.99995
    refine: bool = True


def evaluation_grid(laws: Sequence[ScoreLaw], grid: GapGrid | None = None) -> tuple[np.ndarray, bool]:
    """Sorted evaluation points for ``laws`` and whether they are exact."""
    grid = grid or GapGrid()
    if grid.points is not None:
        return np.unique(np.asarray(grid.points, dtype=float)), False
    bps = [law.breakpoints() for law in laws]
    exact_parts = [b for b in bps if b is not None]
    if all(b is not None for b in bps):
        return np.unique(np.concatenate(exact_parts)), True
    lo, hi = np.inf, -np.inf
    for law, b in zip(laws, bps):
        if b is None:
            q = law.lower_quantile(np.array([grid.q_lo, grid.q_hi]))
            lo, hi = min(lo, q[0]), max(hi, q[1])
        else:
            lo, hi = min(lo, b[0]), max(hi, b[-1])
    pts = np.linspace(lo, hi, grid.resolution)
    return np.unique(np.concatenate([pts] + exact_parts)), False


def _signed_diffs(M: ScoreLaw, N: ScoreLaw, pts: np.ndarray) -> np.ndarray:
    right = M.cdf(pts) - N.cdf(pts)
    if M.has_atoms or N.has_atoms:
        left = M.cdf_left(pts) - N.cdf_left(pts)
        return np.concatenate([right, left])
    return right


def sup_cdf_gap(M: ScoreLaw, N: ScoreLaw, side: str = "plus", grid: GapGrid | None = None) -> float:
    """sup_t (F_M - F_N)_+ for ``plus``, roles swapped for ``minus``, max of both for ``two_sided``."""
    if side not in ("plus", "minus", "two_sided"):
        raise DomainError(f"unknown gap side {side!r}")
    if side == "two_sided":
        return max(sup_cdf_gap(M, N, "plus", grid), sup_cdf_gap(M, N, "minus", grid))
    if side == "minus":
        M, N = N, M
    grid = grid or GapGrid()
    pts, exact = evaluation_grid([M, N], grid)
    diff = _signed_diffs(M, N, pts)
    best = float(max(diff.max(), 0.0))
    if not exact and grid.refine and pts.size > 2:
        k = int(np.argmax(diff[: pts.size]))
        lo, hi = pts[max(k - 1, 0)], pts[min(k + 1, pts.size - 1)]
        fine = np.linspace(lo, hi, 2001)
        best = max(best, float(_signed_diffs(M, N, fine).max()))
    return min(best, 1.0)


def make_sharpness_pair(d: float) -> tuple[PiecewiseLinearCDF, PiecewiseLinearCDF]:
    """Uniform retained law and a target shifted right by ``d`` on [d, 1).

    The target CDF is t - d on [d, 1) and rises linearly from 1 - d to 1
    on [1, 2), so the one-sided gap from the first law to the second is
    exactly ``d``.
    """
    if not 0.0 <= d <= 1.0:
        raise DomainError("gap level must lie in [0, 1]")
    R = uniform(0.0, 1.0)
    if d >= 1.0:
        return R, PiecewiseLinearCDF([1.0, 2.0], [0.0, 1.0])
    return R, PiecewiseLinearCDF([d, 1.0, 2.0], [0.0, 1.0 - d, 1.0])
