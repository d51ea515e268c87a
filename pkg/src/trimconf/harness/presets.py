"""Named run configurations for the standard tables."""

from __future__ import annotations

from ..anomaly import ThresholdPolicy
from ..exceptions import ConfigError
from .config import SceneSpec

TABLE2_D_GRID = (0.0, 0.002, 0.005, 0.01, 0.02, 0.05)
TABLE1_Q = (0.95, 0.975, 0.99)
TABLE5_OFFSETS = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0)
TABLE7_M = (320, 1000, 3000, 10000)

ORDINARY = ThresholdPolicy.explicit(float("inf"))


def main_scene(seed: int, **kw) -> SceneSpec:
    base = dict(family="main_heteroscedastic", seed=seed, epsilon=0.2, m=320)
    base.update(kw)
    return SceneSpec(**base)


def table1(seed: int) -> list[SceneSpec]:
    return [main_scene(seed, threshold=ThresholdPolicy.population(q)) for q in TABLE1_Q]


def table3(seed: int, reps: int = 100) -> list[SceneSpec]:
    """Ordinary split, three population Stein thresholds and the label oracle on the main scene."""
    rows = [main_scene(seed, reps=reps, threshold=ORDINARY)]
    rows += [main_scene(seed, reps=reps, threshold=ThresholdPolicy.population(q)) for q in TABLE1_Q]
    rows.append(main_scene(seed, reps=reps, anomaly="label_oracle", threshold=ThresholdPolicy.explicit(0.5)))
    return rows


def table4(seed: int, reps: int = 100) -> list[SceneSpec]:
    ref = ThresholdPolicy.reference(0.95)
    return [
        main_scene(seed, reps=reps, threshold=ThresholdPolicy.population(0.99)),
        SceneSpec(family="perfect_rejection", seed=seed, epsilon=0.2, m=320, reps=reps, threshold=ref),
        SceneSpec(family="no_separation", seed=seed, epsilon=0.2, m=800, reps=reps, threshold=ref),
        SceneSpec(family="label_only", seed=seed, epsilon=0.2, m=800, reps=reps, threshold=ORDINARY),
        main_scene(seed, m=10000, reps=reps, threshold=ThresholdPolicy.population(0.95)),
    ]


def table5_base(seed: int, reps: int = 100) -> SceneSpec:
    return SceneSpec.from_dict({"family": "separation_sweep", "reps": reps}, seed=seed)


def table7_base(seed: int, reps: int = 100) -> SceneSpec:
    return main_scene(seed, reps=reps, threshold=ThresholdPolicy.population(0.95),
                      certificates=("componentwise", "binomial_audit"))


SIMULATE_PRESETS = {"table3": table3, "table4": table4}
SWEEP_PRESETS = {"table5": (table5_base, "offset", TABLE5_OFFSETS), "table7": (table7_base, "m", TABLE7_M)}


def simulate_preset(name: str, seed: int, reps: int = 100) -> list[SceneSpec]:
    if name not in SIMULATE_PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(SIMULATE_PRESETS)}")
    return SIMULATE_PRESETS[name](seed, reps)


def sweep_preset(name: str, seed: int, reps: int = 100):
    if name not in SWEEP_PRESETS:
        raise ConfigError(f"unknown sweep preset {name!r}; choose from {sorted(SWEEP_PRESETS)}")
    base, axis, values = SWEEP_PRESETS[name]
    return base(seed, reps), axis, values
