"""Finite-sample coverage certificates built from independent bounds or audits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .conformal import CalibrationSample, conformal_rank
from .diagnostics import exact_coverage_identity, mixture_gaps
from .exceptions import DomainError
from .numkernel import clopper_pearson_lower, clopper_pearson_upper, dkw_radius, hoeffding_tail
from .scene import RetainedProfile
from .scorelaw import GapGrid, sup_cdf_gap


def _unit(v: float) -> float:
    return min(max(v, 0.0), 1.0)


@dataclass(frozen=True)
class ComponentBounds:
    """Bounds on the pieces of the retained law: clean retention from below,
    dirty retention, clean distortion, retained-dirty gap and contamination
    weight from above."""

    L_c: float
    U_d: float
    B_delta_plus: float
    B_Q_plus: float = 1.0
    eps_max: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.L_c <= 1.0:
            raise DomainError("clean retention lower bound must lie in (0, 1]")
        for name in ("U_d", "B_delta_plus", "B_Q_plus"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1]")
        if not 0.0 <= self.eps_max < 1.0:
            raise DomainError("contamination bound must lie in [0, 1)")


@dataclass(frozen=True)
class Certificate:
    lower_bound: float
    beta: float
    route: str
    inputs: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"lower_bound": self.lower_bound, "beta": self.beta, "route": self.route, "inputs": dict(self.inputs)}


def componentwise_certificate(alpha: float, b: ComponentBounds, beta: float = 0.0) -> Certificate:
    den = (1.0 - b.eps_max) * b.L_c + b.eps_max * b.U_d
    eps_bar = b.eps_max * b.U_d / den if den > 0 else 0.0
    refined = _unit(1.0 - alpha - b.B_delta_plus - eps_bar * max(b.B_Q_plus - b.B_delta_plus, 0.0))
    simple = _unit(1.0 - alpha - b.B_delta_plus - eps_bar * b.B_Q_plus)
    inputs = {"L_c": b.L_c, "U_d": b.U_d, "B_delta_plus": b.B_delta_plus, "B_Q_plus": b.B_Q_plus,
              "eps_max": b.eps_max, "eps_bar": eps_bar, "simple_form": simple}
    return Certificate(refined, beta, "componentwise", inputs)


def estimate_component_bounds(clean_a, clean_s, dirty_s, threshold: float, eps_max: float, beta: float,
                              B_Q_plus: float = 1.0) -> tuple[ComponentBounds, dict]:
    """Component bounds from independent labelled diagnostic samples.

    The budget ``beta`` is split evenly over four events: a Clopper-Pearson
    lower bound on clean retention, an upper bound on dirty retention, and
    one-sided DKW radii for the retained-clean and full clean score CDFs
    that enter the clean-distortion bound.
    """
    clean_a = np.asarray(clean_a, dtype=float)
    keep = np.asarray(clean_s) <= threshold
    n, n_d = clean_a.size, np.asarray(dirty_s).size
    part = beta / 4.0
    k_c = int(keep.sum())
    k_d = int((np.asarray(dirty_s) <= threshold).sum())
    L_c = clopper_pearson_lower(k_c, n, part)
    U_d = clopper_pearson_upper(k_d, n_d, part) if n_d else 1.0
    if k_c == 0:
        raise DomainError("no clean diagnostic point is retained")
    kept = np.sort(clean_a[keep])
    full = np.sort(clean_a)
    pts = full
    gap = float(np.max(np.searchsorted(kept, pts, "right") / kept.size - np.searchsorted(full, pts, "right") / n))
    gap = max(gap, 0.0)
    B_delta = min(gap + dkw_radius(k_c, part, two_sided=False) + dkw_radius(n, part, two_sided=False), 1.0)
    bounds = ComponentBounds(max(L_c, 1e-300), U_d, B_delta, B_Q_plus, eps_max)
    meta = {"clean_retained": k_c, "n_clean": n, "dirty_retained": k_d, "n_dirty": n_d, "distortion_estimate": gap}
    return bounds, meta


def binomial_audit_certificate(M: int, n_aud: int, beta: float) -> Certificate:
    """Exact lower confidence bound on coverage from M hits among n_aud audit points."""
    return Certificate(clopper_pearson_lower(M, n_aud, beta), beta, "binomial_audit", {"M": M, "n_aud": n_aud})


def selected_audit_gap(selected, audit) -> float:
    """sup_a (F_sel(a) - F_aud(a))_+ over the pooled sample points."""
    sel = np.sort(np.asarray(selected, dtype=float))
    aud = np.sort(np.asarray(audit, dtype=float))
    pts = np.concatenate([sel, aud])
    diff = np.searchsorted(sel, pts, "right") / sel.size - np.searchsorted(aud, pts, "right") / aud.size
    return float(max(diff.max(), 0.0))


def ks_audit_certificate(selected_scores, audit_scores, tau_hat: float, beta: float,
                         rank: int | None = None) -> Certificate:
    """Lower bound on F_P(tau_hat) from the selected scores and an independent clean audit sample.

    With ``rank`` set, F_sel(tau_hat) is replaced by rank / len(selected).
    """
    sel = np.asarray(selected_scores, dtype=float)
    aud = np.asarray(audit_scores, dtype=float)
    if sel.size == 0 or aud.size == 0:
        raise DomainError("selected and audit samples must be nonempty")
    if math.isinf(tau_hat) and tau_hat > 0:
        return Certificate(1.0, beta, "ks_audit", {"degenerate": True})
    f_sel = rank / sel.size if rank is not None else float(np.mean(sel <= tau_hat))
    gap = selected_audit_gap(sel, aud)
    c = dkw_radius(aud.size, beta, two_sided=False)
    return Certificate(_unit(f_sel - gap - c), beta, "ks_audit",
                       {"selected_cdf": f_sel, "gap": gap, "radius": c, "n_aud": aud.size})


@dataclass(frozen=True)
class GridCertificate:
    threshold: float
    n_keep: int
    r_keep: int | None
    tau_hat: float
    lower_bound: float
    degenerate: bool


def same_sample_grid_bound(sample: CalibrationSample, grid: Sequence[float], alpha: float, beta: float,
                           d_bounds: Sequence[float] | None = None) -> list[GridCertificate]:
    """Bounds valid simultaneously over a finite threshold grid evaluated on one calibration sample."""
    grid = [float(t) for t in grid]
    K = len(grid)
    if K == 0 or any(math.isinf(t) or math.isnan(t) for t in grid):
        raise DomainError("grid must be a nonempty list of finite thresholds")
    d = [1.0] * K if d_bounds is None else [float(v) for v in d_bounds]
    if len(d) != K:
        raise DomainError("one loss bound per grid threshold is required")
    out = []
    for t, dt in zip(grid, d):
        kept = sample.a[sample.s <= t]
        n = kept.size
        r = conformal_rank(n, alpha)
        if n == 0 or r > n:
            out.append(GridCertificate(t, n, None, math.inf, 1.0, True))
            continue
        tau = float(np.partition(kept, r - 1)[r - 1])
        lb = _unit(r / n - dt - math.sqrt(math.log(2.0 * K / beta) / (2.0 * n)))
        out.append(GridCertificate(t, n, r, tau, lb, False))
    return out


@dataclass(frozen=True)
class CountBounds:
    clean_lower: float
    dirty_upper: float
    keep_lower: float
    failure_simultaneous: float
    ratio_bound: float
    ratio_failure: float


def retained_count_bounds(m: int, epsilon: float, p_c: float, p_d: float, eta_d: float, eta_k: float,
                          eta: float | None = None) -> CountBounds:
    """Hoeffding bounds on retained clean, dirty and total fractions and on the dirty share."""
    mu = (1.0 - epsilon) * p_c + epsilon * p_d
    if not eta_k < mu:
        raise DomainError("eta_k must be below the retention probability")
    eta = eta_k if eta is None else eta
    pi_c, pi_d = (1.0 - epsilon) * p_c, epsilon * p_d
    return CountBounds(
        clean_lower=max(pi_c - eta, 0.0),
        dirty_upper=min(pi_d + eta, 1.0),
        keep_lower=max(mu - eta, 0.0),
        failure_simultaneous=min(3.0 * math.exp(-2.0 * m * eta * eta), 1.0),
        ratio_bound=min((pi_d + eta_d) / (mu - eta_k), 1.0),
        ratio_failure=min(hoeffding_tail(m, eta_d) + hoeffding_tail(m, eta_k), 1.0),
    )


@dataclass(frozen=True)
class TuningRecord:
    selected: float
    index: int | None
    used_fallback: bool
    feasible: tuple[int, ...]
    loss_guarantee: float
    efficiency_excess: float


def oracle_grid_tuning(grid, B_hat, W_hat, r_B: float, r_W: float, eta: float, fallback: float) -> TuningRecord:
    """Narrowest threshold among those with estimated loss at most eta; smallest threshold on ties."""
    g = np.asarray(grid, dtype=float)
    B, W = np.asarray(B_hat, dtype=float), np.asarray(W_hat, dtype=float)
    if not (g.shape == B.shape == W.shape):
        raise DomainError("estimates must be indexed by the grid")
    feas = np.flatnonzero(B <= eta)
    if feas.size == 0:
        return TuningRecord(float(fallback), None, True, (), eta + r_B, 2.0 * r_W)
    order = np.lexsort((g[feas], W[feas]))
    k = int(feas[order[0]])
    return TuningRecord(float(g[k]), k, False, tuple(int(i) for i in feas), eta + r_B, 2.0 * r_W)


def marginalize(conditional_bound: float, beta: float) -> tuple[float, float]:
    """Product form (1 - beta)[L]_+ and additive form L - beta."""
    if not 0.0 <= beta <= 1.0:
        raise DomainError("failure probability must lie in [0, 1]")
    return (1.0 - beta) * max(conditional_bound, 0.0), conditional_bound - beta


def mixture_test_bounds(profile: RetainedProfile, m: int, alpha: float, grid: GapGrid | None = None,
                        exact: bool = True) -> dict:
    """Coverage bounds when the test point is drawn from the contaminated law."""
    target = profile.contaminated_law()
    direct = max(1.0 - alpha - sup_cdf_gap(profile.law_R, target, "plus", grid), 0.0)
    gaps = mixture_gaps(profile, grid)
    et = profile.eps_tilde
    clean = (1.0 - profile.epsilon) * max(1.0 - alpha - gaps["delta_mix_two"], 0.0)
    worst_delta = (1.0 - et) * gaps["delta_trim_two"] + (et if profile.p_d > 0 else 0.0)
    worst = (1.0 - profile.epsilon) * max(1.0 - alpha - worst_delta, 0.0)
    out = {"direct": direct, "clean_component": clean, "worst_case": worst}
    if exact:
        out["exact"] = exact_coverage_identity(profile, m, alpha, target=target)
    return out
