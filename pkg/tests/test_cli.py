import json
import os
import subprocess
import sys

import pytest

from colloidfield.cli import EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_OK, EXIT_VERIFY, main

SMALL = """
[grid]
n_s = 12
n_theta = 8
n_phi = 16
R_out = 8
"""

TORQUE = """
[particle]
kind = spheroid
a = 1
b = 1.5
[grid]
n_s = 32
n_theta = 8
n_phi = 16
R_out = 12
[solve]
outer_bc = monopole_robin
"""


def _write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _run(tmp_path, cmd, text, *extra, out="out"):
    cfg = _write(tmp_path, text)
    code = main([cmd, "--config", cfg, "--output", str(tmp_path / out), *extra])
    return code, tmp_path / out


def test_trivial_dirichlet_solve(tmp_path):
    text = SMALL + "[anchoring]\nkind = dirichlet\npattern = uniform\nm = 0,0,1\n"
    code, out = _run(tmp_path, "solve", text)
    assert code == EXIT_OK
    rep = json.loads((out / "solve_report.json").read_text())
    assert rep["solve"]["energy"] == 0.0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config_hash"] == rep["config_hash"]
    assert "numpy" in man["versions"] and "total_seconds" in man["timings"]


def test_poisson_check(tmp_path):
    code, out = _run(tmp_path, "poisson-check", "[poisson]\ngamma = 2.5\nl = 0\n")
    assert code == EXIT_OK
    rep = json.loads((out / "poisson.json").read_text())
    assert rep["closed_form_rel_err"] <= 1e-8


def test_config_error_exit(tmp_path, capsys):
    code, _ = _run(tmp_path, "solve", "[solve]\nfoo = 1\n")
    assert code == EXIT_CONFIG
    assert "solve.foo" in capsys.readouterr().err
    assert main(["solve", "--config", str(tmp_path / "missing.ini")]) == EXIT_CONFIG


def test_nonconvergence_under_strict(tmp_path):
    text = SMALL + "[anchoring]\nW = 1.0\n[solve]\nmax_iters = 2\n"
    assert _run(tmp_path, "solve", text)[0] == EXIT_OK
    assert _run(tmp_path, "solve", text, "--strict", out="o2")[0] == EXIT_NONCONVERGED


def test_torque_check_threshold(tmp_path):
    code, out = _run(tmp_path, "torque-check", TORQUE + "[torque]\nthreshold = 1e-9\n", "--strict")
    assert code == EXIT_VERIFY
    rep = json.loads((out / "torque.json").read_text())
    assert rep["rel_error"] > 1e-9 and rep["checks"]["torque_identity"] is False


def _payloads(out):
    files = {}
    for name in sorted(os.listdir(out)):
        if name == "manifest.json":
            continue
        files[name] = (out / name).read_bytes()
    return files


def test_determinism_and_hashes(tmp_path):
    text = SMALL + "[anchoring]\nW = 0.3\n[solve]\nn0 = 1,0,1\n"
    assert _run(tmp_path, "solve", text, out="a")[0] == EXIT_OK
    assert _run(tmp_path, "solve", text, "--workers", "2", out="b")[0] == EXIT_OK
    a, b = _payloads(tmp_path / "a"), _payloads(tmp_path / "b")
    assert a == b
    h = json.loads((tmp_path / "a" / "manifest.json").read_text())["config_hash"]
    for name, data in a.items():
        if name.endswith(".bin"):
            continue
        assert h.encode() in data, name


def test_sweep_worker_independence(tmp_path):
    text = TORQUE.replace("outer_bc = monopole_robin", "outer_bc = monopole_robin\nmax_iters = 100")
    text += "[anchoring]\nW = 0.1\n[sweep]\nsampling = fibonacci\nN = 3\n"
    _run(tmp_path, "sweep", text, "--workers", "1", out="w1")
    _run(tmp_path, "sweep", text, "--workers", "3", out="w3")
    assert (tmp_path / "w1" / "landscape.csv").read_bytes() == (tmp_path / "w3" / "landscape.csv").read_bytes()


def test_extract_then_evaluate(tmp_path):
    text = """
[grid]
n_s = 24
n_theta = 8
n_phi = 16
R_out = 16
[anchoring]
W = 1.0
[solve]
n0 = 1,0,1
outer_bc = monopole_robin
[expansion]
fit_window = 2.5,8
"""
    code, out = _run(tmp_path, "extract", text)
    assert code in (EXIT_OK, EXIT_VERIFY)
    exp = json.loads((out / "expansion.json").read_text())
    assert set(exp) >= {"n0", "v0", "p", "c", "fit_window", "diagnostics", "config_hash"}
    ev = f"[expansion]\ninput = {out / 'expansion.json'}\npoints = 3,0,0; 0,0,5\n"
    code, out2 = _run(tmp_path, "eval-expansion", ev, out="ev")
    assert code == EXIT_OK
    lines = (out2 / "evaluation.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=") and len(lines) == 4
    code, _ = _run(tmp_path, "report", "", out="out")
    assert (out / "summary.json").exists()


def test_console_script(tmp_path):
    cfg = _write(tmp_path, "[poisson]\ngamma = 1.5\nl = 1\n")
    res = subprocess.run(
        [sys.executable, "-m", "colloidfield.cli", "poisson-check", "--config", cfg, "--output", str(tmp_path / "o")],
        capture_output=True, text=True,
    )
    assert res.returncode == EXIT_OK, res.stderr
