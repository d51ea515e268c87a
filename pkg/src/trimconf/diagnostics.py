"""Coverage identities, lower and upper bounds, and clean-distortion diagnostics.

The exact finite-sample coverage of trimmed split conformal prediction is
a binomial mixture over the retained count n of E[F_P(Q_R(B_n))] with
B_n ~ Beta(r_n, n + 1 - r_n). The expectation is computed from the curve
u -> F_P(Q_R(u)) written as linear and constant pieces in u; each piece
integrates against the Beta law in closed form through incomplete beta
values, so the result is exact when both laws are discrete or piecewise
linear and a fine interpolation otherwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np

from .exceptions import DomainError, MissingComponent
from .numkernel import binom_logpmf, binom_weights, conformal_rank, reg_inc_beta
from .scene import ContaminationScene, RetainedProfile, derive_retained_profile
from .scorelaw import GapGrid, ScoreLaw, evaluation_grid, sup_cdf_gap


def _ranks(n, alpha):
    n = np.atleast_1d(np.asarray(n, dtype=int))
    r = np.array([conformal_rank(int(k), alpha) for k in n])
    return n, r


def psi_n(n, alpha: float, d: float):
    """E[(B - d)_+] for B ~ Beta(r_n, n + 1 - r_n); 1 when the cutoff is infinite."""
    if not 0.0 <= d <= 1.0:
        raise DomainError("gap level must lie in [0, 1]")
    scalar = np.ndim(n) == 0
    n, r = _ranks(n, alpha)
    out = np.ones(n.size)
    live = (n > 0) & (r <= n)
    if live.any():
        nn, rr = n[live].astype(float), r[live].astype(float)
        if d <= 0:
            out[live] = rr / (nn + 1.0)
        else:
            i1 = reg_inc_beta(np.full(nn.size, d), rr + 1.0, nn + 1.0 - rr)
            i0 = reg_inc_beta(np.full(nn.size, d), rr, nn + 1.0 - rr)
            out[live] = np.maximum(rr / (nn + 1.0) * (1.0 - i1) - d * (1.0 - i0), 0.0)
    return float(out[0]) if scalar else out


def L_fs(m: int, mu: float, alpha: float, d: float) -> float:
    """Finite-sample lower bound: binomial mixture of psi_n(d) over the retained count."""
    if not 0.0 < mu <= 1.0:
        raise DomainError("retention probability must lie in (0, 1]")
    n, w = binom_weights(m, mu)
    return float(min(max(np.dot(w, psi_n(n, alpha, d)) / w.sum(), 0.0), 1.0))


def granularity_beta_m(m: int, mu: float) -> float:
    """E[1 / (N + 1)] for N ~ Binomial(m, mu)."""
    if not 0.0 < mu <= 1.0 or m < 0:
        raise DomainError("need m >= 0 and mu in (0, 1]")
    return -math.expm1((m + 1) * math.log1p(-mu)) / ((m + 1) * mu) if mu < 1 else 1.0 / (m + 1)


def separation_coefficient_bound(epsilon: float, lam: float) -> float:
    """Upper bound on the retained mixture weight when p_d <= lam * p_c."""
    if not 0.0 <= epsilon < 1.0 or lam < 0:
        raise DomainError("need epsilon in [0, 1) and lam >= 0")
    den = 1.0 - epsilon + epsilon * lam
    return epsilon * lam / den if den > 0 else 0.0


# transfer curve


@dataclass(frozen=True)
class TransferQuadrature:
    """Resolution of the transfer curve for laws without breakpoints."""

    grid: GapGrid = field(default_factory=GapGrid)
    u_levels: int = 8192


def transfer_segments(law_R: ScoreLaw, target: ScoreLaw, quad: TransferQuadrature | None = None):
    """Pieces (u0, u1, g0, g1) of u -> F_target(Q_R(u)), linear on (u0, u1]."""
    quad = quad or TransferQuadrature()
    pts, exact = evaluation_grid([law_R, target], quad.grid)
    lo_r, hi_r = law_R.span()
    lo_p, _ = target.span()
    below = min(lo_r, lo_p, pts[0]) - 1.0
    if law_R.cdf_left(pts[0]) > 0:
        pts = np.concatenate([[below], pts])
    if law_R.cdf(pts[-1]) < 1:
        pts = np.concatenate([pts, [max(hi_r, pts[-1]) + 1.0]])
    uR = np.asarray(law_R.cdf(pts), dtype=float)
    if not exact and not law_R.has_atoms and not target.has_atoms:
        # thin a dense grid to roughly uniform steps in u
        idx = np.unique(np.searchsorted(uR, np.linspace(0.0, 1.0, quad.u_levels + 1), side="left"))
        idx = np.unique(np.concatenate([[0], idx[idx < pts.size], [pts.size - 1]]))
        pts, uR = pts[idx], uR[idx]
    uL = np.asarray(law_R.cdf_left(pts), dtype=float)
    gP = np.asarray(target.cdf(pts), dtype=float)
    gL = np.asarray(target.cdf_left(pts), dtype=float)
    if not exact:
        uR[-1] = max(uR[-1], 1.0)
        uL[0] = 0.0
    u0 = np.concatenate([[0.0], uR[:-1]])
    g0 = np.concatenate([[gL[0]], gP[:-1]])
    segs = [
        np.column_stack([u0, uL, g0, gL]),  # continuous part of each cell
        np.column_stack([uL, uR, gP, gP]),  # atom at the right end
    ]
    seg = np.vstack(segs)
    seg = seg[seg[:, 1] > seg[:, 0]]
    return seg[np.argsort(seg[:, 0], kind="stable")]


def _beta_cdf_window(u, a, b):
    # I_u(a, b) with values far outside the bulk set to 0 or 1 exactly
    n_eff = a + b - 1.0
    s = math.sqrt(20.0 / max(n_eff, 1.0))
    lo, hi = (a - 1.0) / max(n_eff, 1.0) - s, a / max(n_eff, 1.0) + s
    out = np.where(u >= hi, 1.0, 0.0)
    mid = (u > lo) & (u < hi)
    if mid.any():
        out[mid] = reg_inc_beta(np.clip(u[mid], 0.0, 1.0), a, b)
    return out


def transfer_expectations(segments, n, alpha: float):
    """E[g(B_n)] for each retained count n, with value 1 on the infinite-cutoff branch."""
    n, r = _ranks(n, alpha)
    u0, u1, g0, g1 = segments.T
    knots, inv = np.unique(np.concatenate([u0, u1]), return_inverse=True)
    i0, i1 = inv[: u0.size], inv[u0.size:]
    slope = (g1 - g0) / (u1 - u0)
    out = np.ones(n.size)
    for j, (nn, rr) in enumerate(zip(n, r)):
        if nn == 0 or rr > nn:
            continue
        a, b = float(rr), float(nn + 1 - rr)
        Ia = _beta_cdf_window(knots, a, b)
        Ib = _beta_cdf_window(knots, a + 1.0, b)
        dA = Ia[i1] - Ia[i0]
        dB = Ib[i1] - Ib[i0]
        mean = a / (a + b)
        out[j] = np.sum(g0 * dA + slope * (mean * dB - u0 * dA))
    return np.clip(out, 0.0, 1.0)


def exact_coverage(law_R: ScoreLaw, target: ScoreLaw, m: int, mu: float, alpha: float,
                   quad: TransferQuadrature | None = None) -> float:
    """Expected target coverage of the trimmed cutoff for m calibration points with retention mu."""
    if not 0.0 < mu <= 1.0:
        raise DomainError("retention probability must lie in (0, 1]")
    n, w = binom_weights(m, mu)
    seg = transfer_segments(law_R, target, quad)
    return float(min(max(np.dot(w, transfer_expectations(seg, n, alpha)) / w.sum(), 0.0), 1.0))


def exact_coverage_identity(profile: RetainedProfile, m: int, alpha: float, target: ScoreLaw | None = None,
                            quad: TransferQuadrature | None = None) -> float:
    return exact_coverage(profile.law_R, target or profile.law_P, m, profile.mu_keep, alpha, quad)


# clean distortion


def trim_distortion_covariance(scene: ContaminationScene, a, profile: RetainedProfile | None = None):
    """Cov_P(1{A <= a}, K) / p_c, with K the retention indicator, from the joint clean law."""
    t = scene.threshold
    p_c = scene.clean.retention(t) if not (math.isinf(t) and t > 0) else 1.0
    if p_c <= 0:
        raise MissingComponent("clean retention probability is zero")
    a = np.asarray(a, dtype=float)
    joint = scene.clean.joint_keep_cdf(a, t) if not (math.isinf(t) and t > 0) else scene.clean.score_law().cdf(a)
    marginal = scene.clean.score_law().cdf(a)
    return (joint - marginal * p_c) / p_c


def trim_distortion_misspec_bound(eta: float, density_bound: float | None = None, law: ScoreLaw | None = None,
                                  grid: GapGrid | None = None) -> float:
    """2 M eta from a density bound, or the modulus sup_t P(A_0 in [t - eta, t + eta]) of ``law``."""
    if eta < 0:
        raise DomainError("eta must be nonnegative")
    if eta == 0:
        return 0.0
    if density_bound is not None:
        return min(2.0 * density_bound * eta, 1.0)
    if law is None:
        raise DomainError("need a density bound or a law")
    pts, _ = evaluation_grid([law], grid)
    centers = np.unique(np.concatenate([pts, pts - eta, pts + eta]))
    return float(np.max(law.cdf(centers + eta) - law.cdf_left(centers - eta)))


# perturbation and upper bounds


@dataclass(frozen=True)
class PerturbationBound:
    applicable: bool
    bound: float | None
    gap: float
    detail: dict[str, Any] = field(default_factory=dict)


def quantile_perturbation(F: ScoreLaw, G: ScoreLaw, p: float, lambda_min: float, rho: float,
                          grid: GapGrid | None = None) -> PerturbationBound:
    """Bound on |q_G(p) - q_F(p)| from the Kolmogorov distance and a local density floor of F."""
    delta = sup_cdf_gap(F, G, "two_sided", grid)
    if not delta < lambda_min * rho:
        return PerturbationBound(False, None, delta)
    return PerturbationBound(True, delta / lambda_min, delta)


def local_density_floor(law: ScoreLaw, center: float, rho: float, points: int = 2001) -> float:
    """Smallest difference-quotient density of ``law`` on [center - rho, center + rho]."""
    t = np.linspace(center - rho, center + rho, points)
    f = law.cdf(t)
    return float(np.min(np.diff(f) / np.diff(t)))


def width_efficiency_bound(profile: RetainedProfile, m: int, alpha: float, n0: int, beta: float,
                           lambda_min: float, rho: float, grid: GapGrid | None = None) -> PerturbationBound:
    """Threshold deviation Gamma / lambda_min and width bound under a local density condition."""
    if n0 < max(math.ceil(1.0 / alpha) - 1, 1):
        raise DomainError("n0 is below the smallest nondegenerate retained count")
    parts = mixture_gaps(profile, grid)
    gamma = parts["delta_mix_two"] + math.sqrt(math.log(2.0 / beta) / (2.0 * n0)) + 2.0 / n0
    k = np.arange(0, min(n0, m + 1))
    fail_count = float(np.exp(binom_logpmf(k, m, profile.mu_keep)).sum()) if k.size else 0.0
    q = float(profile.law_P.lower_quantile(1.0 - alpha))
    detail = {"gamma": gamma, "q_P": q, "prob_low_count": fail_count, "failure_probability": min(fail_count + beta, 1.0)}
    if not gamma < lambda_min * rho:
        return PerturbationBound(False, None, gamma, detail)
    dev = gamma / lambda_min
    detail["width_bound"] = 2.0 * q + 2.0 * dev
    return PerturbationBound(True, dev, gamma, detail)


def mixture_gaps(profile: RetainedProfile, grid: GapGrid | None = None, dq_min_retained: int = 500) -> dict:
    """Clean-distortion and retained-dirty gaps with their mixture combinations."""
    if profile.law_P_keep is None:
        raise MissingComponent("clean retention probability is zero")
    P, Pk, Qk = profile.law_P, profile.law_P_keep, profile.law_Q_keep
    out = {
        "delta_trim_plus": sup_cdf_gap(Pk, P, "plus", grid),
        "delta_trim_minus": sup_cdf_gap(Pk, P, "minus", grid),
    }
    out["delta_trim_two"] = max(out["delta_trim_plus"], out["delta_trim_minus"])
    et = profile.eps_tilde
    dq_available = Qk is not None and not (
        profile.estimated and profile.metadata.get("dirty_retained", 0) < dq_min_retained)
    if dq_available:
        out["D_Q_plus"] = sup_cdf_gap(Qk, P, "plus", grid)
        out["D_Q_minus"] = sup_cdf_gap(Qk, P, "minus", grid)
    else:
        out["D_Q_plus"] = out["D_Q_minus"] = None
    fallback = profile.p_d > 0 and not dq_available
    dq_p = 0.0 if profile.p_d == 0 else (1.0 if fallback else out["D_Q_plus"])
    dq_m = 0.0 if profile.p_d == 0 else (1.0 if fallback else out["D_Q_minus"])
    out["dq_fallback"] = fallback
    out["dirty_contribution"] = et * dq_p
    out["delta_mix_plus"] = (1.0 - et) * out["delta_trim_plus"] + et * dq_p
    out["delta_mix_minus"] = (1.0 - et) * out["delta_trim_minus"] + et * dq_m
    out["delta_mix_two"] = (1.0 - et) * out["delta_trim_two"] + et * max(dq_p, dq_m)
    return out


@dataclass(frozen=True)
class UpperBound:
    value: float
    mirror_gap: float
    beta_m: float
    via_delta_mix_minus: float
    via_delta_mix_two: float
    continuity_ok: bool


def coverage_upper_bound(profile: RetainedProfile, m: int, alpha: float, grid: GapGrid | None = None,
                         tie_randomized: bool = False) -> UpperBound:
    """1 - alpha + sup(F_P - F_R)_+ + E[1/(N+1)], with the looser mixture variants."""
    cont = not profile.law_R.has_atoms
    if not cont and not tie_randomized:
        warnings.warn("retained law has atoms; the upper bound assumes no ties or randomized tie-breaking",
                      RuntimeWarning, stacklevel=2)
    bm = granularity_beta_m(m, profile.mu_keep)
    mirror = sup_cdf_gap(profile.law_P, profile.law_R, "plus", grid)
    parts = mixture_gaps(profile, grid) if profile.law_P_keep is not None else None
    clip = lambda v: min(max(v, 0.0), 1.0)
    return UpperBound(
        clip(1.0 - alpha + mirror + bm), mirror, bm,
        clip(1.0 - alpha + parts["delta_mix_minus"] + bm) if parts else 1.0,
        clip(1.0 - alpha + parts["delta_mix_two"] + bm) if parts else 1.0,
        cont or tie_randomized,
    )


# report


@dataclass(frozen=True)
class ReportOptions:
    exact: bool = True
    grid: GapGrid | None = None
    quad: TransferQuadrature | None = None
    dq_min_retained: int = 500


@dataclass
class DiagnosticReport:
    alpha: float
    m: int
    p_c: float
    p_d: float
    mu_keep: float
    eps_tilde: float
    delta_trim_plus: float
    delta_trim_minus: float
    delta_trim_two: float
    d_direct_plus: float
    D_Q_plus: float | None
    D_Q_minus: float | None
    dirty_contribution: float
    dq_fallback: bool
    exact_coverage: float | None
    L_fs_at_direct: float
    L_fs_at_mixture: float
    L_mix_plus: float
    beta_m: float
    coverage_upper: float
    provenance: str

    def to_dict(self) -> dict:
        return asdict(self)


def build_report(scene: ContaminationScene | RetainedProfile, m: int, alpha: float,
                 options: ReportOptions | None = None) -> DiagnosticReport:
    """All population diagnostics of one scene at sample size m."""
    opt = options or ReportOptions()
    profile = scene if isinstance(scene, RetainedProfile) else derive_retained_profile(scene)
    if opt.grid is None:
        laws = [law for law in (profile.law_P, profile.law_P_keep, profile.law_Q_keep) if law is not None]
        pts, exact = evaluation_grid(laws)
        if not exact:
            opt = replace(opt, grid=GapGrid(points=pts))
    gaps = mixture_gaps(profile, opt.grid, opt.dq_min_retained)
    d_direct = sup_cdf_gap(profile.law_R, profile.law_P, "plus", opt.grid)
    mu = profile.mu_keep
    ub = coverage_upper_bound(profile, m, alpha, opt.grid, tie_randomized=True)
    exact = exact_coverage_identity(profile, m, alpha, quad=opt.quad) if opt.exact else None
    return DiagnosticReport(
        alpha=alpha, m=m, p_c=profile.p_c, p_d=profile.p_d, mu_keep=mu, eps_tilde=profile.eps_tilde,
        delta_trim_plus=gaps["delta_trim_plus"], delta_trim_minus=gaps["delta_trim_minus"],
        delta_trim_two=gaps["delta_trim_two"], d_direct_plus=d_direct,
        D_Q_plus=gaps["D_Q_plus"], D_Q_minus=gaps["D_Q_minus"],
        dirty_contribution=gaps["dirty_contribution"], dq_fallback=gaps["dq_fallback"],
        exact_coverage=exact,
        L_fs_at_direct=L_fs(m, mu, alpha, d_direct),
        L_fs_at_mixture=L_fs(m, mu, alpha, min(gaps["delta_mix_plus"], 1.0)),
        L_mix_plus=max(1.0 - alpha - gaps["delta_mix_plus"], 0.0),
        beta_m=ub.beta_m, coverage_upper=ub.value,
        provenance="estimate" if profile.estimated else "population",
    )
