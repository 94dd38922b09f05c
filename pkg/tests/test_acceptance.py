"""The ten acceptance criteria, each timed against its runtime budget."""
import time

import numpy as np
import pytest
from scipy.linalg import expm

from artifact.cli import ExperimentConfig, run
from artifact.liealg import assemble, catalog_frame, decompose_near_identity
from artifact.timechange import cocycle_suite

from conftest import ACCEPTANCE


def _record(num, label, ok, elapsed, budget, detail):
    ok = bool(ok) and elapsed < budget
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d} {label}: {detail} ({elapsed:.2f} s / budget {budget:g} s)"
    ACCEPTANCE[(num, label)] = line
    print(line)
    assert ok, line


def _scenario(name, tmp_path, **over):
    cfg = ExperimentConfig.from_dict({"scenario": name, "out": str(tmp_path / name), **over})
    t0 = time.perf_counter()
    code, man = run(cfg)
    return code, man, time.perf_counter() - t0


def test_c01_triple_and_jordan_residuals(tmp_path):
    code, man, dt = _scenario("triple-check", tmp_path, params={"frames": ["sl2", "sl2xsl2", "sl3"], "tol": 1e-9})
    r = man["result"]["max_residual"]
    _record(1, "sl(2)-triple residuals", code == 0 and r <= 1e-9, dt, 1.0, f"max residual {r:.2e} <= 1e-9")


def test_c02_decomposition_round_trip():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for name, n in (("sl2", 334), ("sl2xsl2", 333), ("sl3", 333)):
        fr = catalog_frame(name)
        dim = len(fr.basis)
        for _ in range(n):
            v = rng.normal(size=dim)
            v *= rng.uniform(0, 0.1) / np.linalg.norm(fr.from_coords(v))
            g = expm(fr.from_coords(v))
            p = decompose_near_identity(g, fr)
            worst = max(worst, float(np.abs(assemble(p, fr).matrix - g).max()))
    _record(2, "decomposition round trip", worst <= 1e-8, time.perf_counter() - t0, 5.0, f"1000 elements, max error {worst:.2e} <= 1e-8")


def test_c03_tracking_closed_forms_and_bounds(tmp_path):
    code, man, dt = _scenario("tracking-suite", tmp_path, params={"n": 1000})
    r = man["result"]
    ok = code == 0 and r["closed_form_max_error"] <= 1e-9 and r["violations"] == 0 and r["bounds_accepted"] >= 1000
    _record(3, "tracking closed forms + bounds", ok, dt, 10.0,
            f"closed-form error {r['closed_form_max_error']:.2e}, {r['bounds_accepted']} draws, {r['violations']} violations")


def test_c04_cocycle_suite():
    t0 = time.perf_counter()
    rep = cocycle_suite(200, 1000.0)
    worst = max(rep["max_residual"].values())
    ok = worst <= 1e-9 and rep["bracket_violations"] == 0
    _record(4, "cocycle suite", ok, time.perf_counter() - t0, 60.0,
            f"200 draws |t|<=1e3, max residual {worst:.2e}, bracket violations {rep['bracket_violations']}")


def test_c05_coefficient_bounds(tmp_path):
    code, man, dt = _scenario("polybound-suite", tmp_path, constants={"eta": 0.2}, params={"n": 1000, "b": 0.05})
    r = man["result"]
    _record(5, "coefficient-bound suite", code == 0 and r["failures"] == 0, dt, 30.0,
            f"{r['checked']} checked of {r['n']}, {r['failures']} failures")


def test_c06_solovay_falsifier(tmp_path):
    code, man, dt = _scenario("solovay", tmp_path, params={"trials": 10000, "b": 0.1, "theta": 0.01})
    r = man["result"]
    ok = code == 0 and r["accepted"] == 10000 and r["counterexamples"] == 0
    _record(6, "Solovay falsifier search", ok, dt, 60.0, f"{r['accepted']} trials, {r['counterexamples']} counterexamples")


@pytest.mark.parametrize("kind,value", [("c", 0.003), ("u", 0.003)])
def test_c07_basic_lemma_recovery(tmp_path, kind, value):
    code, man, dt = _scenario("basic-lemma", tmp_path, params={"lambda": 1000.0, "offset": {"kind": kind, "value": value}})
    r = man["result"]
    bounds = r["pipeline"]["bounds"]
    ok = code == 0 and r["found"] and r["injected_recovery_error"] <= 1e-6 and all(b["pass"] for b in bounds.values())
    _record(7, f"Basic Lemma end to end ({kind} offset)", ok, dt, 300.0,
            f"offset {kind}={value}, found={r['found']}, recovery error {r['injected_recovery_error']:.1e}, {len(bounds)} bounds pass")


def test_c08_transport_cohomology(tmp_path):
    code, man, dt = _scenario("cohomology", tmp_path, params={"t_max": 100.0, "n_grid": 20, "tol": 1e-5})
    r = man["result"]
    _record(8, "normaliser transport + cohomology", code == 0 and r["max_residual"] <= 1e-5, dt, 120.0,
            f"20-point grid to t=100, max residual {r['max_residual']:.2e}")


def test_c09_psi_t_decay(tmp_path):
    code, man, dt = _scenario("psi-t", tmp_path, params={"n_samples": 20, "t_grid": [2, 4, 6, 8, 10, 12], "slack": 1e-3})
    r = man["result"]
    _record(9, "psi_t convergence", code == 0 and r["max_ratio"] <= 1 + 1e-3, dt, 120.0,
            f"max d/(sup|f| e^-t) = {r['max_ratio']:.4f} <= 1.001")


def test_c10_deviation_slope(tmp_path):
    code, man, dt = _scenario("deviation", tmp_path, params={"t_min": 1e2, "t_max": 1e4, "max_slope": 0.95})
    r = man["result"]
    _record(10, "ergodic deviation slope", code == 0 and r["slope"] <= 0.95, dt, 300.0,
            f"slope {r['slope']:.3f} <= 0.95 (eta_emp {r['eta_emp']:.3f})")
