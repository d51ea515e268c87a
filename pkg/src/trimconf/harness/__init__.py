"""Scene generators, Monte Carlo runner and table output."""

from .config import SceneSpec, load_spec
from .experiment import RunResult, run_experiment, run_sweep
from .scenes import build_scene, generate_scene
from .tables import emit_tables, load_results, save_results

__all__ = ["SceneSpec", "load_spec", "RunResult", "run_experiment", "run_sweep", "build_scene",
           "generate_scene", "emit_tables", "load_results", "save_results"]
