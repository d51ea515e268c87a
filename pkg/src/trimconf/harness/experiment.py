"""Monte Carlo runner: replications, sweeps and attached diagnostics."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..anomaly import ThresholdPolicy
from ..certify import (binomial_audit_certificate, componentwise_certificate, estimate_component_bounds,
                       ks_audit_certificate)
from ..conformal import CalibrationSample, MonteCarloCoverage, empirical_coverage, trim_and_calibrate
from ..diagnostics import ReportOptions, build_report
from ..exceptions import ConfigError
from ..scene import derive_retained_profile
from .config import SceneSpec
from .scenes import DIAG_STREAM, REP_STREAM, SceneBundle, build_scene, stream

Z95 = 1.959963984540054
SWEEP_AXES = ("offset", "m", "q", "epsilon")


def _mean_interval(values: np.ndarray) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    mean = float(v.mean())
    if v.size < 2 or not np.all(np.isfinite(v)):
        return mean, 0.0 if v.size < 2 else math.inf
    return mean, float(Z95 * v.std(ddof=1) / math.sqrt(v.size))


@dataclass
class RunResult:
    spec: dict
    method: str
    threshold_source: str
    threshold: float
    coverage: list[float]
    width: list[float]
    coverage_mean: float
    coverage_halfwidth: float
    width_mean: float
    width_halfwidth: float
    degenerate_rate: float
    report: dict
    certificates: dict[str, dict] = field(default_factory=dict)

    @property
    def coverage_interval(self) -> tuple[float, float]:
        return self.coverage_mean - self.coverage_halfwidth, self.coverage_mean + self.coverage_halfwidth

    def to_dict(self) -> dict:
        return {
            "spec": self.spec, "method": self.method, "threshold_source": self.threshold_source,
            "threshold": self.threshold, "coverage": list(self.coverage), "width": list(self.width),
            "coverage_mean": self.coverage_mean, "coverage_halfwidth": self.coverage_halfwidth,
            "width_mean": self.width_mean, "width_halfwidth": self.width_halfwidth,
            "degenerate_rate": self.degenerate_rate, "report": dict(self.report),
            "certificates": {k: dict(v) for k, v in self.certificates.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"not a run result: {exc}") from exc


def method_label(spec: SceneSpec, source: str) -> str:
    if spec.label:
        return spec.label
    if spec.anomaly == "label_oracle":
        return "Clean oracle"
    if source == "none":
        return "Ordinary split"
    name = {"stein": "Stein", "mahalanobis": "Mahalanobis"}.get(spec.anomaly, "Trimmed")
    p = spec.threshold
    if p.q is None:
        return f"{name} t={p.value:g}"
    ref = " clean-ref" if p.kind == "clean_reference_quantile" else ""
    return f"{name}{ref} q={p.q:.3f}"


def _one_rep(bundle: SceneBundle, spec: SceneSpec, law_P, grid_index: int, rep: int):
    scene = bundle.scene
    rng = stream(spec.seed, REP_STREAM, grid_index, rep)
    a, s, dirty = scene.sample_calibration(rng, spec.m)
    out = trim_and_calibrate(CalibrationSample(a, s, dirty), scene.threshold, spec.alpha)
    if spec.n_test > 0:
        mode = MonteCarloCoverage(spec.n_test, int(rng.integers(2**63 - 1)))
    else:
        mode = "exact"
    cov = empirical_coverage(out, law_P, mode)
    audits = {}
    if "binomial_audit" in spec.certificates or "ks_audit" in spec.certificates:
        n_aud = spec.n_audit or spec.m
        aud, _ = scene.clean.sample(rng, n_aud)
        if "binomial_audit" in spec.certificates:
            hits = n_aud if out.degenerate else int(np.sum(aud <= out.tau_hat))
            audits["binomial_audit"] = binomial_audit_certificate(hits, n_aud, spec.cert_beta).lower_bound
        if "ks_audit" in spec.certificates and out.n_keep:
            kept = a[out.keep_indices]
            audits["ks_audit"] = ks_audit_certificate(kept, aud, out.tau_hat, spec.cert_beta,
                                                      rank=out.r_keep).lower_bound
    return cov, out.width, out.degenerate, audits


def _componentwise(bundle: SceneBundle, spec: SceneSpec, grid_index: int) -> dict:
    scene = bundle.scene
    rng = stream(spec.seed, DIAG_STREAM, grid_index)
    n = spec.n_diag or spec.m
    ca, cs = scene.clean.sample(rng, n)
    _, ds = scene.dirty.sample(rng, n)
    bounds, meta = estimate_component_bounds(ca, cs, ds, scene.threshold, spec.epsilon, spec.cert_beta)
    cert = componentwise_certificate(spec.alpha, bounds, spec.cert_beta)
    d = cert.to_dict()
    d["inputs"].update(meta)
    return d


def run_experiment(spec: SceneSpec, threads: int = 1, grid_index: int = 0, report: bool = True) -> RunResult:
    """Run ``spec.reps`` replications of trimmed split conformal on one scene.

    Replication ``r`` draws from the stream ``(seed, 1, grid_index, r)``, so
    results do not depend on ``threads`` and two methods sharing a seed see
    the same calibration draws wherever their scenes coincide.
    """
    bundle = build_scene(spec)
    scene = bundle.scene
    profile = derive_retained_profile(scene)
    law_P = profile.law_P
    reps = range(spec.reps)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda r: _one_rep(bundle, spec, law_P, grid_index, r), reps))
    else:
        rows = [_one_rep(bundle, spec, law_P, grid_index, r) for r in reps]
    cov = np.array([r[0] for r in rows])
    width = np.array([r[1] for r in rows])
    cmean, chw = _mean_interval(cov)
    wmean, whw = _mean_interval(width)

    rep_dict = build_report(profile, spec.m, spec.alpha, ReportOptions(exact=spec.exact)).to_dict() if report else {}
    certs: dict[str, dict] = {}
    if "componentwise" in spec.certificates:
        certs["componentwise"] = _componentwise(bundle, spec, grid_index)
    for name in ("binomial_audit", "ks_audit"):
        vals = [r[3][name] for r in rows if name in r[3]]
        if vals:
            m_, hw = _mean_interval(np.array(vals))
            certs[name] = {"lower_bound": m_, "halfwidth": hw, "beta": spec.cert_beta, "route": name,
                           "inputs": {"n_aud": spec.n_audit or spec.m, "reps": len(vals)}}
    return RunResult(
        spec=spec.to_dict(), method=method_label(spec, bundle.threshold_source),
        threshold_source=bundle.threshold_source, threshold=float(scene.threshold),
        coverage=cov.tolist(), width=width.tolist(), coverage_mean=cmean, coverage_halfwidth=chw,
        width_mean=wmean, width_halfwidth=whw, degenerate_rate=float(np.mean([r[2] for r in rows])),
        report=rep_dict, certificates=certs,
    )


def _at(base: SceneSpec, axis: str, value) -> SceneSpec:
    if axis == "q":
        p = base.threshold
        if p.q is None:
            raise ConfigError("a q sweep needs a quantile threshold policy")
        return base.with_(threshold=ThresholdPolicy(p.kind, q=float(value)))
    if axis == "m":
        return base.with_(m=int(value))
    return base.with_(**{axis: float(value)})


def run_sweep(base: SceneSpec, axis: str, values: Sequence[Any], threads: int = 1) -> list[RunResult]:
    """One run per grid value; grid point ``i`` uses replication streams indexed by ``i``."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}")
    if len(values) == 0:
        raise ConfigError("sweep needs at least one grid value")
    specs = [_at(base, axis, v) for v in values]
    return [run_experiment(s, threads=threads, grid_index=i) for i, s in enumerate(specs)]
