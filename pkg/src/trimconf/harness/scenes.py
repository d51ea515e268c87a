"""Scene generators for the simulation families."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..anomaly import ConstantScore, MahalanobisScore, SteinScoreNorm, ThresholdPolicy, resolve_threshold
from ..exceptions import ConfigError
from ..scene import (ContaminationScene, DiscreteComponent, GaussianRegressionDesign, LinearBackbone,
                     RegressionComponent)
from ..scorelaw import FiniteDiscrete
from .config import SceneSpec


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the (seed, key) stream."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key)))


AUX_STREAM = 0
REP_STREAM = 1
DIAG_STREAM = 2


@dataclass(frozen=True)
class SceneBundle:
    scene: ContaminationScene
    clean_design: GaussianRegressionDesign | None
    dirty_design: GaussianRegressionDesign | None
    backbone: LinearBackbone | None
    scorer: object
    threshold_source: str


def designs(spec: SceneSpec) -> tuple[GaussianRegressionDesign, GaussianRegressionDesign]:
    slope_noise = 0.36 if spec.clean_noise == "heteroscedastic" else 0.0
    clean = GaussianRegressionDesign(0.0, 1.0, 1.0, 0.0, 0.6, slope_noise)
    f = spec.family
    if f == "main_heteroscedastic":
        dirty = GaussianRegressionDesign(spec.dirty_mean, 1.0, 1.0, 0.0, 0.05, 0.0)
    elif f == "perfect_rejection":
        dirty = GaussianRegressionDesign(12.0, 1.0, 1.0, 0.0, 0.05, 0.0)
    elif f == "no_separation":
        dirty = GaussianRegressionDesign(0.0, 1.0, 1.0, 0.0, 0.05, 0.0)
    elif f == "label_only":
        dirty = GaussianRegressionDesign(0.0, 1.0, 1.0, spec.label_offset, 0.05, 0.0)
    elif f == "separation_sweep":
        dirty = GaussianRegressionDesign(spec.offset, 1.0, 1.0, 0.0, 0.05, 0.0)
    else:
        raise ConfigError(f"family {f!r} has no regression design")
    return clean, dirty


def _source(policy: ThresholdPolicy, anomaly: str) -> str:
    if anomaly == "label_oracle":
        return "label oracle"
    if policy.kind == "explicit":
        return "none" if math.isinf(policy.value) else "explicit"
    if policy.kind == "fixed_population_quantile":
        return f"population q={policy.q:.3f}"
    if policy.kind == "clean_reference_quantile":
        return f"clean reference q={policy.q:.3f}"
    return "grid"


def _discrete_component(block: dict, name: str) -> DiscreteComponent:
    try:
        return DiscreteComponent(block["a"], block["s"], block["p"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"discrete {name} block needs 'a', 's' and 'p' lists") from exc


def build_scene(spec: SceneSpec) -> SceneBundle:
    """Scene plus the auxiliary objects used to build it.

    The auxiliary stage (clean fitting split for the anomaly score and the
    fitted backbone, then the clean reference split) draws from its own
    stream of ``spec.seed``, so it is shared by every run with that seed.
    """
    policy = spec.threshold
    if spec.family == "custom_discrete":
        d = spec.discrete or {}
        unknown = set(d) - {"clean", "dirty"}
        if unknown or "clean" not in d or "dirty" not in d:
            raise ConfigError("discrete block needs exactly 'clean' and 'dirty'")
        clean, dirty = _discrete_component(d["clean"], "clean"), _discrete_component(d["dirty"], "dirty")
        if policy.kind == "explicit":
            t = policy.value
        elif policy.kind == "fixed_population_quantile":
            t = float(FiniteDiscrete(clean.s, clean.masses).lower_quantile(policy.q))
        else:
            raise ConfigError("discrete scenes support explicit or population thresholds")
        return SceneBundle(ContaminationScene(clean, dirty, spec.epsilon, t), None, None, None, None,
                           _source(policy, spec.anomaly))

    clean_d, dirty_d = designs(spec)
    aux = stream(spec.seed, AUX_STREAM)
    x_fit, y_fit = clean_d.sample(aux, spec.fit_size)
    x_ref, _ = clean_d.sample(aux, spec.reference_size)
    if spec.backbone == "ols":
        slope, intercept = np.polyfit(x_fit, y_fit, 1)
        backbone = LinearBackbone(float(intercept), float(slope))
    else:
        backbone = LinearBackbone(0.0, 1.0)

    if spec.anomaly == "label_oracle":
        if policy.kind != "explicit":
            policy = ThresholdPolicy.explicit(0.5)
        t = policy.value
        scene = ContaminationScene(RegressionComponent(clean_d, backbone, ConstantScore(0.0)),
                                   RegressionComponent(dirty_d, backbone, ConstantScore(1.0)), spec.epsilon, t)
        return SceneBundle(scene, clean_d, dirty_d, backbone, None, "label oracle")
    if spec.anomaly == "stein":
        scorer = SteinScoreNorm(random_state=spec.seed).fit(x_fit)
    elif spec.anomaly == "mahalanobis":
        scorer = MahalanobisScore().fit(x_fit)
    else:
        raise ConfigError("regression scenes need a stein, mahalanobis or label_oracle anomaly score")
    if policy.kind == "grid":
        raise ConfigError("grid thresholds need a selection route; use the certify command")
    t = resolve_threshold(policy, scorer, clean_design=clean_d, reference_sample=x_ref, seed=spec.seed)
    scene = ContaminationScene(RegressionComponent(clean_d, backbone, scorer),
                               RegressionComponent(dirty_d, backbone, scorer), spec.epsilon, float(t))
    return SceneBundle(scene, clean_d, dirty_d, backbone, scorer, _source(policy, spec.anomaly))


def generate_scene(spec: SceneSpec) -> ContaminationScene:
    return build_scene(spec).scene
