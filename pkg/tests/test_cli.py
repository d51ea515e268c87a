import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from trimconf.cli import main
from trimconf.diagnostics import L_fs

DISCRETE = {"family": "custom_discrete", "epsilon": 0.2, "m": 30, "reps": 50,
            "threshold": {"kind": "explicit", "value": 0.5},
            "discrete": {"clean": {"a": [1.0, 2.0, 3.0], "s": [0.0, 0.0, 1.0], "p": [0.3, 0.4, 0.3]},
                         "dirty": {"a": [9.0], "s": [0.0], "p": [1.0]}}}


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_lfs_csv(capsys):
    code, out, _ = run(capsys, "lfs", "--m", "320", "--mu", "0.95", "--d-grid", "0,0.01")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [float(r["d"]) for r in rows] == [0.0, 0.01]
    assert float(rows[1]["L_fs"]) == pytest.approx(L_fs(320, 0.95, 0.1, 0.01), rel=1e-12)


def test_lfs_json_to_file(capsys, tmp_path):
    path = tmp_path / "l.json"
    code, out, _ = run(capsys, "lfs", "--m", "100", "--mu", "1", "--format", "json", "--out", str(path))
    assert code == 0 and out == ""
    assert len(json.loads(path.read_text())) == 6


@pytest.mark.parametrize("argv", [
    ["lfs", "--m", "10"],
    ["lfs", "--m", "10", "--mu", "0.5", "--d-grid", "a,b"],
    ["simulate", "--preset", "table3"],
    ["certify", "binomial", "--hits", "5"],
    ["nope"],
    ["tables", "/nonexistent/results.json"],
    ["lfs", "--m", "10", "--mu", "0.5", "--threads", "0"],
])
def test_config_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert err


@pytest.mark.parametrize("argv", [
    ["lfs", "--m", "10", "--mu", "1.5"],
    ["certify", "binomial", "--hits", "12", "--n-aud", "10"],
    ["exact", "--sharpness", "1.5"],
])
def test_domain_errors_exit_3(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 3
    assert err


def test_certify_routes(capsys, tmp_path):
    code, out, _ = run(capsys, "certify", "binomial", "--hits", "500", "--n-aud", "500", "--beta", "0.05")
    assert code == 0
    assert json.loads(out)["lower_bound"] == pytest.approx(0.05 ** (1 / 500))
    b = tmp_path / "b.json"
    b.write_text(json.dumps({"L_c": 0.9, "U_d": 0.0, "B_delta_plus": 0.01}))
    code, out, _ = run(capsys, "certify", "componentwise", "--bounds", str(b))
    assert code == 0 and json.loads(out)["lower_bound"] == pytest.approx(0.89)
    cal = tmp_path / "cal.txt"
    rng = np.random.default_rng(0)
    np.savetxt(cal, np.column_stack([rng.exponential(size=100), rng.random(100)]))
    code, out, _ = run(capsys, "certify", "grid", "--calibration", str(cal), "--grid", "0.5,0.9")
    assert code == 0 and len(json.loads(out)) == 2


def test_exact_modes(capsys, tmp_path):
    code, out, _ = run(capsys, "exact", "--sharpness", "0.01", "--m", "320", "--mu", "0.95")
    row = next(csv.DictReader(io.StringIO(out)))
    assert code == 0 and float(row["exact_coverage"]) == pytest.approx(float(row["L_fs"]), abs=1e-11)
    laws = tmp_path / "laws.json"
    laws.write_text(json.dumps({"R": {"kind": "half_normal"}, "P": {"kind": "half_normal"}, "m": 99}))
    code, out, _ = run(capsys, "exact", str(laws))
    assert code == 0
    assert float(next(csv.DictReader(io.StringIO(out)))["exact_coverage"]) == pytest.approx(0.9, abs=1e-6)


def test_simulate_then_tables(capsys, tmp_path):
    cfg = tmp_path / "scene.json"
    cfg.write_text(json.dumps(DISCRETE))
    res = tmp_path / "res.json"
    code, _, _ = run(capsys, "simulate", str(cfg), "--seed", "4", "--format", "json", "--out", str(res))
    assert code == 0
    code, out, _ = run(capsys, "tables", str(res))
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 1
    code, again, _ = run(capsys, "simulate", str(cfg), "--seed", "4", "--threads", "3")
    assert again == out
    code, _, err = run(capsys, "simulate", str(cfg))
    assert code == 2 and "--seed" in err


def test_diagnose_and_sweep(capsys, tmp_path):
    cfg = tmp_path / "scene.json"
    cfg.write_text(json.dumps(DISCRETE))
    code, out, _ = run(capsys, "diagnose", str(cfg))
    assert code == 0 and "exact_coverage" in out
    code, out, _ = run(capsys, "sweep", str(cfg), "--seed", "1", "--axis", "epsilon", "--values", "0,0.1")
    assert code == 0 and len(list(csv.DictReader(io.StringIO(out)))) == 2


def test_console_script():
    proc = subprocess.run([sys.executable, "-m", "trimconf.cli", "lfs", "--m", "20", "--mu", "1", "--d-grid", "0"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("d,L_fs,floor")
