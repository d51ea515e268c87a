"""Run configuration: one JSON document per run, unknown keys rejected."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any

from ..anomaly import ThresholdPolicy
from ..exceptions import ConfigError, DomainError

SCHEMA_VERSION = 1

FAMILIES = ("main_heteroscedastic", "perfect_rejection", "no_separation", "label_only", "separation_sweep",
            "custom_discrete")
ANOMALIES = ("stein", "mahalanobis", "label_oracle", "given")
BACKBONES = ("oracle", "ols")
NOISES = ("heteroscedastic", "homoscedastic")
CERTIFICATES = ("componentwise", "binomial_audit", "ks_audit")

_FAMILY_DEFAULTS = {
    "main_heteroscedastic": {"epsilon": 0.2, "m": 320},
    "perfect_rejection": {"epsilon": 0.2, "m": 320},
    "no_separation": {"epsilon": 0.2, "m": 800},
    "label_only": {"epsilon": 0.2, "m": 800},
    "separation_sweep": {"epsilon": 0.3, "m": 800, "clean_noise": "homoscedastic",
                         "threshold": {"kind": "clean_reference_quantile", "q": 0.95}},
    "custom_discrete": {"epsilon": 0.2, "m": 30, "anomaly": "given"},
}


def _float(v, name):
    if isinstance(v, str) and v.lower() in ("inf", "+inf", "infinity"):
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{name} must be a number or \"inf\"")
    return float(v)


def policy_from_dict(d: dict) -> ThresholdPolicy:
    if not isinstance(d, dict):
        raise ConfigError("threshold must be an object")
    unknown = set(d) - {"kind", "q", "value", "grid"}
    if unknown:
        raise ConfigError(f"unknown threshold keys: {sorted(unknown)}")
    try:
        kind = d.get("kind")
        if kind == "explicit":
            return ThresholdPolicy.explicit(_float(d.get("value"), "threshold value"))
        if kind == "grid":
            return ThresholdPolicy.over_grid([_float(v, "grid value") for v in d.get("grid") or []])
        return ThresholdPolicy(kind, q=d.get("q"))
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


def policy_to_dict(p: ThresholdPolicy) -> dict:
    out: dict[str, Any] = {"kind": p.kind}
    if p.q is not None:
        out["q"] = p.q
    if p.value is not None:
        out["value"] = "inf" if math.isinf(p.value) else p.value
    if p.grid is not None:
        out["grid"] = list(p.grid)
    return out


@dataclass(frozen=True)
class SceneSpec:
    family: str
    seed: int
    epsilon: float
    m: int
    alpha: float = 0.1
    anomaly: str = "stein"
    threshold: ThresholdPolicy = field(default_factory=lambda: ThresholdPolicy.population(0.99))
    reps: int = 100
    n_test: int = 0
    backbone: str = "oracle"
    fit_size: int = 500
    reference_size: int = 256
    offset: float = 0.0
    label_offset: float = 8.0
    dirty_mean: float = 6.0
    clean_noise: str = "heteroscedastic"
    certificates: tuple[str, ...] = ("componentwise",)
    n_diag: int | None = None
    n_audit: int | None = None
    cert_beta: float = 0.05
    exact: bool = True
    label: str | None = None
    discrete: dict | None = None
    version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown scene family {self.family!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        if not 0.0 <= self.epsilon < 1.0:
            raise ConfigError("epsilon must lie in [0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.m < 0 or self.reps < 1 or self.n_test < 0:
            raise ConfigError("need m >= 0, reps >= 1 and n_test >= 0")
        if self.anomaly not in ANOMALIES:
            raise ConfigError(f"unknown anomaly score {self.anomaly!r}")
        if self.backbone not in BACKBONES:
            raise ConfigError(f"unknown backbone {self.backbone!r}")
        if self.clean_noise not in NOISES:
            raise ConfigError(f"unknown clean noise model {self.clean_noise!r}")
        bad = set(self.certificates) - set(CERTIFICATES)
        if bad:
            raise ConfigError(f"unknown certificates: {sorted(bad)}")
        if not 0.0 < self.cert_beta < 1.0:
            raise ConfigError("cert_beta must lie in (0, 1)")
        if self.family == "custom_discrete" and not self.discrete:
            raise ConfigError("custom_discrete scenes need a 'discrete' block")
        if self.version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config version {self.version}")

    @classmethod
    def from_dict(cls, d: dict, seed: int | None = None) -> "SceneSpec":
        if not isinstance(d, dict):
            raise ConfigError("scene config must be a JSON object")
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        family = d.get("family")
        if family not in FAMILIES:
            raise ConfigError(f"unknown scene family {family!r}")
        merged = dict(_FAMILY_DEFAULTS[family])
        merged.update(d)
        if seed is not None:
            merged["seed"] = seed
        if "seed" not in merged or merged["seed"] is None:
            raise ConfigError("a seed is required")
        if "threshold" in merged and not isinstance(merged["threshold"], ThresholdPolicy):
            merged["threshold"] = policy_from_dict(merged["threshold"])
        if "certificates" in merged:
            merged["certificates"] = tuple(merged["certificates"])
        for key in ("epsilon", "alpha", "offset", "label_offset", "dirty_mean", "cert_beta"):
            if key in merged:
                merged[key] = _float(merged[key], key)
        try:
            return cls(**merged)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        out = asdict(self)
        out["threshold"] = policy_to_dict(self.threshold)
        out["certificates"] = list(self.certificates)
        return out

    def with_(self, **changes) -> "SceneSpec":
        return replace(self, **changes)


def load_spec(path: str, seed: int | None = None) -> SceneSpec:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return SceneSpec.from_dict(data, seed=seed)
