"""Table rows for run results, written as CSV or JSON."""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Iterable, Sequence

from ..exceptions import ConfigError
from .experiment import RunResult

COLUMNS = ("method", "threshold_source", "coverage", "coverage_lo", "coverage_hi", "width", "width_lo",
           "width_hi", "p_c", "p_d", "eps_tilde", "delta_trim_plus", "D_Q_plus", "dirty_contribution",
           "L_mix_plus", "conservative_lb", "audit_lb", "fallback_rate")
RETENTION = ("p_c", "p_d", "eps_tilde")


def fmt(x, retention: bool = False) -> str:
    if x is None:
        return "N/A"
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if retention and 0.0 < abs(x) < 1e-3:
        return f"{x:.1e}"
    return f"{x:.4f}"


def table_row(r: RunResult) -> dict[str, str]:
    rep = r.report or {}
    certs = r.certificates or {}
    lo, hi = r.coverage_interval
    row = {
        "method": r.method,
        "threshold_source": r.threshold_source,
        "coverage": fmt(r.coverage_mean),
        "coverage_lo": fmt(lo),
        "coverage_hi": fmt(hi),
        "width": fmt(r.width_mean),
        "width_lo": fmt(r.width_mean - r.width_halfwidth),
        "width_hi": fmt(r.width_mean + r.width_halfwidth),
    }
    for k in RETENTION:
        row[k] = fmt(rep.get(k), retention=True)
    row["delta_trim_plus"] = fmt(rep.get("delta_trim_plus"))
    row["D_Q_plus"] = fmt(rep.get("D_Q_plus"))
    row["dirty_contribution"] = fmt(rep.get("dirty_contribution"))
    lmix = fmt(rep.get("L_mix_plus"))
    row["L_mix_plus"] = (">=" + lmix) if rep.get("dq_fallback") and lmix != "N/A" else lmix
    row["conservative_lb"] = fmt(certs.get("componentwise", {}).get("lower_bound"))
    audit = certs.get("binomial_audit") or certs.get("ks_audit") or {}
    row["audit_lb"] = fmt(audit.get("lower_bound"))
    row["fallback_rate"] = fmt(r.degenerate_rate)
    return row


def render(results: Iterable[RunResult], format: str = "csv") -> str:
    rows = [table_row(r) for r in results]
    if format == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue()
    if format == "json":
        return json.dumps({"columns": list(COLUMNS), "rows": rows}, indent=2) + "\n"
    raise ConfigError(f"unknown table format {format!r}")


def emit_tables(results: Sequence[RunResult], format: str, path: str) -> str:
    """Write one row per result, in input order, and return the path."""
    text = render(results, format)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def read_table(path: str) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        if path.endswith(".json"):
            return json.load(fh)["rows"]
        return list(csv.DictReader(fh))


def _encode(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    return obj


_SPECIAL = {"inf": math.inf, "-inf": -math.inf, "nan": math.nan}


def _decode(obj, key=None):
    if isinstance(obj, dict):
        return {k: _decode(v, k) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v, key) for v in obj]
    if isinstance(obj, str) and obj in _SPECIAL and key not in ("threshold_source", "method"):
        return _SPECIAL[obj]
    return obj


def dump_results(results: Sequence[RunResult]) -> str:
    """Lossless JSON for a list of run results (non-finite floats as strings)."""
    return json.dumps([_encode(r.to_dict()) for r in results], indent=1, sort_keys=True) + "\n"


def save_results(results: Sequence[RunResult], path: str) -> str:
    with open(path, "w") as fh:
        fh.write(dump_results(results))
    return path


def load_results(path: str) -> list[RunResult]:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if isinstance(data, dict):
        data = [data]
    if not isinstance(data, list):
        raise ConfigError(f"{path}: expected a list of run results")
    out = []
    for d in data:
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: expected a list of run results")
        dec = _decode(d)
        dec["spec"] = d.get("spec")  # already JSON-safe, keep string infinities
        out.append(RunResult.from_dict(dec))
    return out
