"""Trimmed split conformal prediction under calibration contamination."""

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "CalibrationSample": "conformal",
    "TrimmedSplitConformalRegressor": "conformal",
    "trim_and_calibrate": "conformal",
    "L_fs": "diagnostics",
    "build_report": "diagnostics",
    "exact_coverage_identity": "diagnostics",
    "psi_n": "diagnostics",
    "ConfigError": "exceptions",
    "DegenerateRetention": "exceptions",
    "DomainError": "exceptions",
    "MissingComponent": "exceptions",
    "ContaminationScene": "scene",
    "derive_retained_profile": "scene",
}

__all__ = sorted(_EXPORTS)


# lazy so that light commands skip the scikit-learn import
def __getattr__(name):
    if name in _EXPORTS:
        return getattr(importlib.import_module(f".{_EXPORTS[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
