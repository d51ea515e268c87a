"""Special functions and concentration radii.

The regularized incomplete beta function is evaluated by the modified
Lentz continued fraction, vectorized over numpy arrays. Everything else in
the package that needs Beta or binomial probabilities goes through here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, gammaln, xlog1py, xlogy

from .exceptions import DomainError

_EPS = 1e-15
_FPMIN = 1e-300
_MAXIT = 50000


@dataclass(frozen=True)
class BetaParams:
    """Shapes of a Beta(a, b) law."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0) or not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise DomainError(f"Beta shapes must be positive and finite, got a={self.a}, b={self.b}")

    def cdf(self, x):
        return reg_inc_beta(x, self.a, self.b)

    def ppf(self, u):
        return beta_quantile(u, self.a, self.b)

    @property
    def mean(self) -> float:
        return self.a / (self.a + self.b)


@dataclass(frozen=True)
class BinomialParams:
    """Binomial(m, mu) law."""

    m: int
    mu: float

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 0:
            raise DomainError(f"number of trials must be a nonnegative integer, got {self.m}")
        if not 0.0 <= self.mu <= 1.0:
            raise DomainError(f"success probability must lie in [0, 1], got {self.mu}")

    def pmf(self, k):
        return binom_pmf(k, self.m, self.mu)

    def cdf(self, k):
        return binom_pmf_cdf(k, self)[1]


def _betacf(a, b, x):
    # modified Lentz; arrays are 1-D and share a shape
    out = np.empty_like(x)
    idx = np.arange(x.size)
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
    d = 1.0 / d
    h = d.copy()
    for m in range(1, _MAXIT + 1):
        m2 = 2.0 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        d = 1.0 / d
        h = h * d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        d = 1.0 / d
        delta = d * c
        h = h * delta
        done = np.abs(delta - 1.0) < _EPS
        if done.any():
            out[idx[done]] = h[done]
            keep = ~done
            if not keep.any():
                return out
            idx, a, b, x, c, d, h = idx[keep], a[keep], b[keep], x[keep], c[keep], d[keep], h[keep]
            qab, qap, qam = qab[keep], qap[keep], qam[keep]
    raise DomainError("incomplete beta continued fraction did not converge")


def reg_inc_beta(x, a, b):
    """Regularized incomplete beta function I_x(a, b).

    Parameters
    ----------
    x : array_like
        Evaluation points in [0, 1].
    a, b : array_like
        Positive shapes, broadcast against ``x``.

    Returns
    -------
    ndarray or float
        The Beta(a, b) CDF at ``x``; a float when all inputs are scalars.
    """
    x_, a_, b_ = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(a, dtype=float),
                                     np.asarray(b, dtype=float))
    scalar = x_.ndim == 0
    x_, a_, b_ = x_.ravel(), a_.ravel(), b_.ravel()
    if np.any(np.isnan(x_)) or np.any((x_ < 0) | (x_ > 1)):
        raise DomainError("incomplete beta argument must lie in [0, 1]")
    if np.any(~(a_ > 0)) or np.any(~(b_ > 0)) or not (np.all(np.isfinite(a_)) and np.all(np.isfinite(b_))):
        raise DomainError("incomplete beta shapes must be positive and finite")
    res = np.where(x_ >= 1.0, 1.0, 0.0)
    inner = (x_ > 0) & (x_ < 1)
    if inner.any():
        xi, ai, bi = x_[inner], a_[inner], b_[inner]
        logfront = xlogy(ai, xi) + xlog1py(bi, -xi) - betaln(ai, bi)
        front = np.exp(logfront)
        direct = xi < (ai + 1.0) / (ai + bi + 2.0)
        val = np.empty_like(xi)
        if direct.any():
            val[direct] = front[direct] * _betacf(ai[direct], bi[direct], xi[direct]) / ai[direct]
        flip = ~direct
        if flip.any():
            val[flip] = 1.0 - front[flip] * _betacf(bi[flip], ai[flip], 1.0 - xi[flip]) / bi[flip]
        res[inner] = np.clip(val, 0.0, 1.0)
    return float(res[0]) if scalar else res.reshape(np.broadcast(np.asarray(x), np.asarray(a), np.asarray(b)).shape)


def beta_pdf(x, a, b):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.exp(xlogy(a - 1.0, x) + xlog1py(b - 1.0, -x) - betaln(a, b))


def _beta_quantile_guess(u, a, b):
    # normal-approximation start for a, b >= 1 and power-law tails otherwise
    x0 = np.empty_like(u)
    big = (a >= 1.0) & (b >= 1.0)
    if big.any():
        uu, aa, bb = u[big], a[big], b[big]
        pp = np.where(uu < 0.5, uu, 1.0 - uu)
        t = np.sqrt(-2.0 * np.log(pp))
        z = (2.30753 + 0.27061 * t) / (1.0 + t * (0.99229 + 0.04481 * t)) - t
        z = np.where(uu < 0.5, z, -z)
        al = (z * z - 3.0) / 6.0
        h = 2.0 / (1.0 / (2.0 * aa - 1.0) + 1.0 / (2.0 * bb - 1.0))
        w = z * np.sqrt(al + h) / h - (1.0 / (2.0 * bb - 1.0) - 1.0 / (2.0 * aa - 1.0)) * (al + 5.0 / 6.0 - 2.0 / (3.0 * h))
        x0[big] = aa / (aa + bb * np.exp(2.0 * w))
    small = ~big
    if small.any():
        uu, aa, bb = u[small], a[small], b[small]
        t = np.exp(aa * np.log(aa / (aa + bb))) / aa
        v = np.exp(bb * np.log(bb / (aa + bb))) / bb
        w = t + v
        left = uu < t / w
        x0[small] = np.where(left, (aa * w * uu) ** (1.0 / aa), 1.0 - (bb * w * (1.0 - uu)) ** (1.0 / bb))
    bad = ~np.isfinite(x0) | (x0 <= 0.0) | (x0 >= 1.0)
    x0[bad] = 0.5
    return x0


def beta_quantile(u, a, b):
    """Inverse of :func:`reg_inc_beta` in its first argument.

    Newton iteration kept inside a shrinking bracket; a step that leaves
    the bracket or fails to halve the previous step is replaced by
    bisection.
    """
    u_, a_, b_ = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(a, dtype=float),
                                     np.asarray(b, dtype=float))
    shape = u_.shape
    u_, a_, b_ = u_.ravel().copy(), a_.ravel().copy(), b_.ravel().copy()
    if np.any(np.isnan(u_)) or np.any((u_ <= 0) | (u_ >= 1)):
        raise DomainError("beta quantile level must lie strictly inside (0, 1)")
    BetaParams(float(np.min(a_)), float(np.min(b_)))
    x = _beta_quantile_guess(u_, a_, b_)
    lo = np.zeros_like(u_)
    hi = np.ones_like(u_)
    step_old = np.ones_like(u_)
    live = np.arange(u_.size)
    for _ in range(2000):
        if live.size == 0:
            break
        xl, ul, al, bl = x[live], u_[live], a_[live], b_[live]
        f = reg_inc_beta(xl, al, bl) - ul
        lo[live] = np.where(f < 0, xl, lo[live])
        hi[live] = np.where(f > 0, xl, hi[live])
        dens = beta_pdf(xl, al, bl)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            step = f / dens
        xn = xl - step
        lol, hil = lo[live], hi[live]
        bisect = (~np.isfinite(xn) | (xn <= lol) | (xn >= hil) | (2.0 * np.abs(step) > np.abs(step_old[live])))
        mid = 0.5 * (lol + hil)
        # a Newton step below resolution means xl is already the root
        tiny = np.isfinite(step) & (np.abs(step) <= 2.0 * _EPS * np.abs(xl))
        xn = np.where(tiny | (f == 0), xl, np.where(bisect, mid, xn))
        step_old[live] = np.abs(xn - xl)
        x[live] = xn
        done = tiny | (f == 0) | (np.abs(xn - xl) <= 2.0 * _EPS * np.abs(xn)) | (mid <= lol) | (mid >= hil)
        live = live[~done]
    return float(x[0]) if len(shape) == 0 else x.reshape(shape)


_LN_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _stirlerr(n):
    """log(n!) - log(sqrt(2 pi n) (n/e)^n), by series for n > 15."""
    n = np.asarray(n, dtype=float)
    out = np.empty_like(n)
    small = n <= 15.0
    ns = n[small]
    with np.errstate(divide="ignore", invalid="ignore"):
        out[small] = np.where(ns > 0, gammaln(ns + 1.0) - (ns + 0.5) * np.log(np.where(ns > 0, ns, 1.0))
                              + ns - _LN_SQRT_2PI, 0.0)
    nb = n[~small]
    nn = nb * nb
    s0, s1, s2, s3, s4 = 1 / 12, 1 / 360, 1 / 1260, 1 / 1680, 1 / 1188
    out[~small] = np.where(
        nb > 500, (s0 - s1 / nn) / nb,
        np.where(nb > 80, (s0 - (s1 - s2 / nn) / nn) / nb,
                 np.where(nb > 35, (s0 - (s1 - (s2 - s3 / nn) / nn) / nn) / nb,
                          (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / nb)))
    return out


def _bd0(x, np_):
    """Deviance term x log(x / np) + np - x, without cancellation near x = np."""
    x, np_ = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(np_, dtype=float))
    out = np.empty(x.shape)
    near = np.abs(x - np_) < 0.1 * (x + np_)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[~near] = xlogy(x[~near], x[~near] / np_[~near]) + np_[~near] - x[~near]
    xn, pn = x[near], np_[near]
    v = (xn - pn) / (xn + pn)
    acc = (xn - pn) * v
    ej = 2.0 * xn * v
    v2 = v * v
    live = np.ones(xn.size, dtype=bool)
    j = 1
    while live.any() and j < 2000:
        ej = ej * v2
        nxt = acc + ej / (2 * j + 1)
        live = nxt != acc
        acc = nxt
        j += 1
    out[near] = acc
    return out


def binom_logpmf(k, m, mu):
    """Log binomial pmf in saddle-point form, accurate to a few ulps for m up to 1e5 and beyond."""
    k = np.asarray(k, dtype=float)
    scalar = k.ndim == 0
    k = np.atleast_1d(k)
    out = np.full(k.shape, -np.inf)
    if mu == 0.0 or mu == 1.0:
        hit = k == (0.0 if mu == 0.0 else float(m))
        out[hit] = 0.0
        return float(out[0]) if scalar else out
    q = 1.0 - mu
    edge0, edge1 = k == 0, k == m
    out[edge0] = m * math.log1p(-mu)
    out[edge1 & ~edge0] = m * math.log(mu)
    mid = ~(edge0 | edge1)
    km = k[mid]
    lc = (_stirlerr(np.array([float(m)]))[0] - _stirlerr(km) - _stirlerr(m - km)
          - _bd0(km, m * mu) - _bd0(m - km, m * q))
    lf = 2.0 * _LN_SQRT_2PI + np.log(km) + np.log1p(-km / m)
    out[mid] = lc - 0.5 * lf
    return float(out[0]) if scalar else out


def binom_pmf(k, m, mu):
    BinomialParams(m, mu)
    k = np.asarray(k)
    if np.any((k < 0) | (k > m)):
        raise DomainError(f"binomial count must lie in [0, {m}]")
    out = np.exp(binom_logpmf(k, m, mu))
    return float(out) if out.ndim == 0 else out


def binom_pmf_cdf(k, p: BinomialParams):
    """Probability mass and lower CDF P(N <= k) for N ~ Binomial(m, mu)."""
    ks = np.asarray(k)
    if np.any((ks < 0) | (ks > p.m)):
        raise DomainError(f"binomial count must lie in [0, {p.m}]")
    pmf_all = np.exp(binom_logpmf(np.arange(p.m + 1), p.m, p.mu))
    cdf_all = np.minimum(np.cumsum(pmf_all), 1.0)
    pmf, cdf = pmf_all[ks], cdf_all[ks]
    if ks.ndim == 0:
        return float(pmf), float(cdf)
    return pmf, cdf


def binom_weights(m: int, mu: float, cutoff: float = 1e-15):
    """Support points and weights of Binomial(m, mu), dropping tails below ``cutoff``.

    Terms are removed from each end while their mass is below the cutoff, so
    the kept block is contiguous around the mode.
    """
    BinomialParams(m, mu)
    n = np.arange(m + 1)
    w = np.exp(binom_logpmf(n, m, mu))
    big = np.flatnonzero(w >= cutoff)
    if big.size == 0:
        return n, w
    lo, hi = big[0], big[-1]
    return n[lo:hi + 1], w[lo:hi + 1]


def clopper_pearson_lower(M: int, n_aud: int, beta: float) -> float:
    """One-sided exact lower confidence bound for a binomial proportion."""
    if n_aud < 1 or M < 0 or M > n_aud:
        raise DomainError(f"need 0 <= M <= n_aud with n_aud >= 1, got M={M}, n_aud={n_aud}")
    if not 0 < beta < 1:
        raise DomainError("confidence budget must lie in (0, 1)")
    if M == 0:
        return 0.0
    return beta_quantile(beta, M, n_aud - M + 1)


def clopper_pearson_upper(M: int, n_aud: int, beta: float) -> float:
    """One-sided exact upper confidence bound for a binomial proportion."""
    if n_aud < 1 or M < 0 or M > n_aud:
        raise DomainError(f"need 0 <= M <= n_aud with n_aud >= 1, got M={M}, n_aud={n_aud}")
    if not 0 < beta < 1:
        raise DomainError("confidence budget must lie in (0, 1)")
    if M == n_aud:
        return 1.0
    return beta_quantile(1.0 - beta, M + 1, n_aud - M)


def dkw_radius(n: int, budget: float, two_sided: bool = True, union_count: int = 1) -> float:
    """Uniform ECDF deviation radius sqrt(log(c K / budget) / (2 n))."""
    if n < 1 or not 0 < budget < 1 or union_count < 1:
        raise DomainError("need n >= 1, budget in (0, 1) and union_count >= 1")
    c = 2.0 if two_sided else 1.0
    return math.sqrt(math.log(c * union_count / budget) / (2.0 * n))


def hoeffding_tail(n: int, eta: float) -> float:
    if n < 1 or eta < 0:
        raise DomainError("need n >= 1 and eta >= 0")
    return min(1.0, max(0.0, math.exp(-2.0 * n * eta * eta)))


def ceil_rank(x: float) -> int:
    """Ceiling that ignores floating error below 1e-9, so 20 * 0.9 maps to 18."""
    return int(math.ceil(x - 1e-9))


def conformal_rank(n: int, alpha: float) -> int:
    """ceil((n + 1)(1 - alpha))."""
    return ceil_rank((n + 1) * (1.0 - alpha))
