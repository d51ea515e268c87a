"""Command-line entry point.

Exit status is 0 on success, 2 for configuration errors and 3 for numeric
or domain errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from .diagnostics import L_fs, ReportOptions, build_report, exact_coverage, exact_coverage_identity
from .exceptions import ConfigError, DomainError
from .scorelaw import FiniteDiscrete, Gaussian, HalfNormalScaled, PiecewiseLinearCDF, make_sharpness_pair

# the harness pulls in scikit-learn, so it is imported only by the commands that need it
TABLE2_D_GRID = (0.0, 0.002, 0.005, 0.01, 0.02, 0.05)
SWEEP_AXES = ("offset", "m", "q", "epsilon")

EXIT_OK, EXIT_CONFIG, EXIT_DOMAIN = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def _read_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _records(rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rows, indent=2, default=_jsonify) + "\n"
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _cell(v) for k, v in r.items()})
    return buf.getvalue()


def _jsonify(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


def _cell(v):
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    if isinstance(v, (dict, list)):
        return json.dumps(v, default=_jsonify)
    return "N/A" if v is None else v


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _need_seed(args):
    if args.seed is None:
        raise ConfigError(f"--seed is required for '{args.command}'")
    return args.seed


def _law(d: dict):
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError("a law needs a 'kind'")
    kind = d["kind"]
    try:
        if kind == "discrete":
            return FiniteDiscrete(d["atoms"], d["masses"])
        if kind == "piecewise_linear":
            return PiecewiseLinearCDF(d["knots"], d["levels"])
        if kind == "gaussian":
            return Gaussian(d.get("mean", 0.0), d.get("sd", 1.0))
        if kind == "half_normal":
            return HalfNormalScaled(d.get("sigma", 1.0))
    except KeyError as exc:
        raise ConfigError(f"law of kind {kind!r} is missing {exc}") from exc
    raise ConfigError(f"unknown law kind {kind!r}")


# subcommands

def cmd_lfs(args):
    grid = _floats(args.d_grid) if args.d_grid else list(TABLE2_D_GRID)
    rows = [{"d": d, "L_fs": L_fs(args.m, args.mu, args.alpha, d), "floor": max(1.0 - args.alpha - d, 0.0)}
            for d in grid]
    return _records(rows, args.format)


def _specs_from(args, need_seed: bool):
    from .harness.config import load_spec
    from .harness.presets import simulate_preset, table1

    seed = _need_seed(args) if need_seed else args.seed
    if args.preset:
        if args.preset == "table1":
            return table1(_need_seed(args))
        return simulate_preset(args.preset, _need_seed(args), args.reps or 100)
    if not args.config:
        raise ConfigError("give a scene config file or --preset")
    raw = _read_json(args.config)
    if seed is None and isinstance(raw, dict) and raw.get("family") == "custom_discrete":
        seed = 0  # discrete scenes draw nothing before calibration
    spec = load_spec(args.config, seed=seed)
    return [spec.with_(reps=args.reps)] if args.reps else [spec]


def _sampled_dq(scene, seed: int):
    # D_Q from 1e5 labelled dirty draws; None when too few of them are retained
    from .diagnostics import mixture_gaps
    from .scene import MonteCarloMode, derive_retained_profile
    try:
        prof = derive_retained_profile(scene, MonteCarloMode(samples=100_000, seed=seed))
        return mixture_gaps(prof)["D_Q_plus"]
    except DomainError:
        return None


def cmd_diagnose(args):
    from .harness.scenes import build_scene
    specs = _specs_from(args, need_seed=False)
    opts = ReportOptions(exact=not args.no_exact)
    rows = []
    for spec in specs:
        bundle = build_scene(spec)
        rep = build_report(bundle.scene, spec.m, spec.alpha, opts).to_dict()
        rows.append({"family": spec.family, "threshold_source": bundle.threshold_source,
                     "threshold": bundle.scene.threshold, **rep,
                     "D_Q_plus_sampled": _sampled_dq(bundle.scene, spec.seed)})
    return _records(rows, args.format)


def cmd_exact(args):
    from .harness.config import SceneSpec
    from .harness.scenes import build_scene
    from .scene import derive_retained_profile
    if args.sharpness is not None:
        R, P = make_sharpness_pair(args.sharpness)
        val = exact_coverage(R, P, args.m, args.mu, args.alpha)
        rows = [{"d": args.sharpness, "m": args.m, "mu": args.mu, "alpha": args.alpha, "exact_coverage": val,
                 "L_fs": L_fs(args.m, args.mu, args.alpha, args.sharpness)}]
        return _records(rows, args.format)
    if not args.config:
        raise ConfigError("give --sharpness D or a config file")
    data = _read_json(args.config)
    if isinstance(data, dict) and "family" in data:
        spec = SceneSpec.from_dict(data, seed=args.seed)
        profile = derive_retained_profile(build_scene(spec).scene)
        val = exact_coverage_identity(profile, spec.m, spec.alpha)
        rows = [{"family": spec.family, "m": spec.m, "mu": profile.mu_keep, "alpha": spec.alpha,
                 "exact_coverage": val}]
        return _records(rows, args.format)
    unknown = set(data) - {"R", "P", "m", "mu", "alpha"} if isinstance(data, dict) else {"?"}
    if unknown or "R" not in data or "P" not in data:
        raise ConfigError("exact config needs 'R' and 'P' laws and optional m, mu, alpha")
    m = int(data.get("m", args.m))
    mu = float(data.get("mu", args.mu))
    alpha = float(data.get("alpha", args.alpha))
    val = exact_coverage(_law(data["R"]), _law(data["P"]), m, mu, alpha)
    return _records([{"m": m, "mu": mu, "alpha": alpha, "exact_coverage": val}], args.format)


def _results_text(results, args):
    from .harness.tables import dump_results, render

    return dump_results(results) if args.format == "json" else render(results, "csv")


def cmd_simulate(args):
    from .harness.experiment import run_experiment
    seed = _need_seed(args)
    specs = _specs_from(args, need_seed=True)
    results = [run_experiment(s.with_(seed=seed), threads=args.threads) for s in specs]
    return _results_text(results, args)


def cmd_sweep(args):
    from .harness.config import load_spec
    from .harness.experiment import run_sweep
    from .harness.presets import sweep_preset
    seed = _need_seed(args)
    if args.preset:
        base, axis, values = sweep_preset(args.preset, seed, args.reps or 100)
        axis = args.axis or axis
        values = _floats(args.values) if args.values else values
    else:
        if not args.config or not args.axis or not args.values:
            raise ConfigError("sweep needs a config file, --axis and --values (or --preset)")
        base = load_spec(args.config, seed=seed)
        if args.reps:
            base = base.with_(reps=args.reps)
        axis, values = args.axis, _floats(args.values)
    results = run_sweep(base, axis, values, threads=args.threads)
    return _results_text(results, args)


def _load_scores(path: str) -> np.ndarray:
    try:
        return np.loadtxt(path, dtype=float, ndmin=1, delimiter=None)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def cmd_certify(args):
    from .certify import (ComponentBounds, binomial_audit_certificate, componentwise_certificate,
                          ks_audit_certificate, same_sample_grid_bound)
    from .conformal import CalibrationSample
    route = args.route
    if route == "binomial":
        if args.hits is None or args.n_aud is None:
            raise ConfigError("binomial route needs --hits and --n-aud")
        cert = binomial_audit_certificate(args.hits, args.n_aud, args.beta)
        return json.dumps(cert.to_dict(), indent=2) + "\n"
    if route == "ks":
        if not args.selected or not args.audit or args.tau is None:
            raise ConfigError("ks route needs --selected, --audit and --tau")
        cert = ks_audit_certificate(_load_scores(args.selected), _load_scores(args.audit), args.tau, args.beta)
        return json.dumps(cert.to_dict(), indent=2, default=_jsonify) + "\n"
    if route == "componentwise":
        if args.bounds is None:
            raise ConfigError("componentwise route needs --bounds FILE")
        d = _read_json(args.bounds)
        try:
            b = ComponentBounds(**d)
        except TypeError as exc:
            raise ConfigError(f"bad component bounds: {exc}") from exc
        return json.dumps(componentwise_certificate(args.alpha, b, args.beta).to_dict(), indent=2) + "\n"
    if route == "grid":
        if not args.calibration or not args.grid:
            raise ConfigError("grid route needs --calibration FILE (two columns: A S) and --grid")
        try:
            arr = np.loadtxt(args.calibration, dtype=float, ndmin=2)
        except ValueError as exc:
            raise ConfigError(f"{args.calibration}: {exc}") from exc
        if arr.shape[1] != 2:
            raise ConfigError("calibration file needs two columns: A S")
        sample = CalibrationSample(arr[:, 0], arr[:, 1])
        rows = [vars(g) for g in same_sample_grid_bound(sample, _floats(args.grid), args.alpha, args.beta)]
        return json.dumps(rows, indent=2, default=_jsonify) + "\n"
    raise ConfigError(f"unknown route {route!r}")


def cmd_tables(args):
    from .harness.tables import load_results, render
    results = load_results(args.results)
    return render(results, args.format)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="root seed (required for stochastic commands)")
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--threads", type=int, default=1)

    p = _Parser(prog="trimconf", description="Trimmed split conformal diagnostics and simulations.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("lfs", parents=[common], help="finite-sample scalar lower bound over a d grid")
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--mu", type=float, required=True)
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--d-grid", default=None, help="comma-separated discrepancies")
    s.set_defaults(func=cmd_lfs)

    for name, func, hlp in (("diagnose", cmd_diagnose, "population diagnostics for a scene"),
                            ("simulate", cmd_simulate, "Monte Carlo replications of a scene")):
        s = sub.add_parser(name, parents=[common], help=hlp)
        s.add_argument("config", nargs="?")
        s.add_argument("--preset", choices=("table1", "table3", "table4"))
        s.add_argument("--reps", type=int, default=None)
        if name == "diagnose":
            s.add_argument("--no-exact", action="store_true", help="skip the exact coverage evaluation")
        s.set_defaults(func=func)

    s = sub.add_parser("exact", parents=[common], help="exact coverage of the trimmed cutoff")
    s.add_argument("config", nargs="?")
    s.add_argument("--sharpness", type=float, default=None, help="use the extremal pair at discrepancy D")
    s.add_argument("--m", type=int, default=320)
    s.add_argument("--mu", type=float, default=1.0)
    s.add_argument("--alpha", type=float, default=0.1)
    s.set_defaults(func=cmd_exact)

    s = sub.add_parser("sweep", parents=[common], help="one run per value of a scene parameter")
    s.add_argument("config", nargs="?")
    s.add_argument("--preset", choices=("table5", "table7"))
    s.add_argument("--axis", choices=SWEEP_AXES)
    s.add_argument("--values", default=None)
    s.add_argument("--reps", type=int, default=None)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("certify", parents=[common], help="coverage certificate from audit data or bounds")
    s.add_argument("route", choices=("binomial", "ks", "componentwise", "grid"))
    s.add_argument("--beta", type=float, default=0.05)
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--hits", type=int)
    s.add_argument("--n-aud", type=int)
    s.add_argument("--selected")
    s.add_argument("--audit")
    s.add_argument("--tau", type=float)
    s.add_argument("--bounds")
    s.add_argument("--calibration")
    s.add_argument("--grid")
    s.set_defaults(func=cmd_certify)

    s = sub.add_parser("tables", parents=[common], help="re-emit a saved results file as a table")
    s.add_argument("results")
    s.set_defaults(func=cmd_tables)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        _emit(args.func(args), args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, ArithmeticError, ValueError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
