"""Experiment harness: ``artifact run | list | validate``."""
from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import yaml

from .liealg import catalog_frame

EXIT_OK, EXIT_FAILED, EXIT_INVALID = 0, 1, 2


class StageError(RuntimeError):
    def __init__(self, stage: str, msg: str):
        super().__init__(f"[{stage}] {msg}")
        self.stage = stage


# ---------------------------------------------------------------- configuration

DEFAULTS: dict = {
    "scenario": "triple-check",
    "seed": 0,
    "out": "runs",
    "frame": "sl2",
    "lattice": {"kind": "SL2Z", "factors": 1},
    "constants": {
        "eps": 0.1,
        "rho": 0.005,
        "eta": 0.2,
        "b": None,
        "theta": None,
        "omega": 0.05,
        "m0": 50.0,
        "m": 5.0,
        "kappa_tilde": 16.0,
        "tol": 1.0e-6,
    },
    "time_change": {"amplitude": 0.2},
    "conjugacy": {"kind": "coboundary", "amplitude": 0.2, "offset": None},
    "params": {},
}

UNITS = {
    "time": "unipotent flow parameter",
    "distance": "max(|c|, |a|+|ubar|+|u|) in Jordan coordinates",
    "eps, rho, b, eta, theta, omega": "dimensionless",
    "m0, m, lambda": "unipotent flow parameter",
}


@dataclass
class ExperimentConfig:
    scenario: str
    seed: int
    out: str
    frame: str
    lattice: dict
    constants: dict
    time_change: dict
    conjugacy: dict
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        merged = copy.deepcopy(DEFAULTS)
        unknown = set(d) - set(merged)
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        for k, v in d.items():
            if isinstance(merged.get(k), dict) and isinstance(v, dict):
                merged[k].update(v)
            else:
                merged[k] = v
        return cls(**merged)

    def to_dict(self) -> dict:
        return {k: copy.deepcopy(getattr(self, k)) for k in DEFAULTS}


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    text = Path(path).read_text()
    if path.endswith(".json"):
        return json.loads(text)
    return yaml.safe_load(text) or {}


def frame_D_maxd(name: str) -> tuple:
    fr = catalog_frame(name)
    return fr.D, max(fr.max_d, 1)


def validate(cfg: ExperimentConfig) -> list:
    """Field-level messages; empty when the configuration is admissible."""
    errs = []
    if cfg.scenario not in SCENARIOS:
        errs.append(f"scenario: unknown {cfg.scenario!r}; choose from {sorted(SCENARIOS)}")
    try:
        D, maxd = frame_D_maxd(cfg.frame)
    except Exception as exc:  # unknown catalog name
        errs.append(f"frame: {exc}")
        D, maxd = 2, 1
    c = cfg.constants
    num = {}
    for key in ("eps", "rho", "eta", "omega", "m0", "m", "kappa_tilde", "tol"):
        v = c.get(key)
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            errs.append(f"constants.{key}: must be a finite number")
        else:
            num[key] = float(v)
    if "eps" in num and not 0 < num["eps"] <= 0.1:
        errs.append(f"constants.eps: {num['eps']} not in (0, 0.1]")
    if "rho" in num and "eps" in num and not 0 < num["rho"] <= num["eps"] / 2:
        errs.append(f"constants.rho: {num['rho']} not in (0, eps/2 = {num['eps'] / 2}]")
    if "eta" in num and not 0 < num["eta"] < 1:
        errs.append(f"constants.eta: {num['eta']} not in (0, 1)")
    if c.get("b") is not None and "eta" in num:
        bmax = num["eta"] / (2 * D * maxd)
        if not 0 < float(c["b"]) < bmax:
            errs.append(f"constants.b: {c['b']} not in (0, eta/(2 D max d) = {bmax:.6g})")
    if c.get("theta") is not None and not 0 < float(c["theta"]) < 1:
        errs.append(f"constants.theta: {c['theta']} not in (0, 1)")
    if "omega" in num and not 0 <= num["omega"] < 1:
        errs.append(f"constants.omega: {num['omega']} not in [0, 1)")
    for key in ("m0", "m", "kappa_tilde", "tol"):
        if key in num and num[key] <= 0:
            errs.append(f"constants.{key}: must be positive")
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool):
        errs.append("seed: must be an integer")
    return errs


def constants_chain(cfg: ExperimentConfig, C: Optional[float] = None) -> dict:
    """eta -> b -> c(b) -> theta -> omega -> m0 -> rho -> m, with the values in force."""
    c = cfg.constants
    D, maxd = frame_D_maxd(cfg.frame)
    eta = float(c["eta"])
    b = c.get("b")
    if b is None:
        b = 0.5 * eta / (2 * D * maxd)
    b = float(b)
    chain = {
        "eta": eta,
        "b": b,
        "b_max": eta / (2 * D * maxd),
        "c(b)": (1 + eta) / (1 + eta - b),
        "theta": c.get("theta"),
        "omega": float(c["omega"]),
        "m0": float(c["m0"]),
        "rho": float(c["rho"]),
        "m": float(c["m"]),
        "eps": float(c["eps"]),
    }
    if C is not None:
        chain["C"] = float(C)
        if chain["theta"] is not None:
            chain["omega_max"] = float(chain["theta"]) / (50 * C ** 4)
    return chain


# ---------------------------------------------------------------- scenarios


@dataclass
class ScenarioResult:
    passed: bool
    summary: dict
    tables: dict = field(default_factory=dict)  # name -> (header, rows)


def _lattice(cfg: ExperimentConfig):
    from .quotient import LatticeSpec

    return LatticeSpec.product(int(cfg.lattice.get("factors", 1)))


def _coboundary(cfg: ExperimentConfig, lat=None):
    from .liealg import GroupElement, expm
    from .timechange import build_coboundary_conjugacy, siegel_observable

    conj = cfg.conjugacy
    f = siegel_observable().scaled(float(conj.get("amplitude", 0.2)))
    off = conj.get("offset")
    g0 = None
    if off:
        fr = (lat or _lattice(cfg)).default_frame()
        if off["kind"] == "u":
            g0 = fr.u(float(off["value"]))
        else:
            E = np.asarray(fr.modules[int(off.get("module", 0))].basis[0])
            g0 = GroupElement.from_matrix(expm(float(off["value"]) * E), fr.dims)
    alpha, psi = build_coboundary_conjugacy(f, offset=g0, seed=cfg.seed)
    return f, alpha, psi


def _g1(cfg: ExperimentConfig, lat):
    from .liealg import GroupElement, expm

    fr = lat.default_frame()
    g = cfg.params.get("g", {"kind": "a", "value": 0.01})
    if g["kind"] == "a":
        return fr.a(float(g["value"]))
    if g["kind"] == "u":
        return fr.u(float(g["value"]))
    E = np.asarray(fr.modules[int(g.get("module", 1))].basis[0])
    return GroupElement.from_matrix(expm(float(g["value"]) * E), fr.dims)


def run_triple_check(cfg: ExperimentConfig) -> ScenarioResult:
    from .liealg import frame_residuals

    frames = cfg.params.get("frames", ["sl2", "sl2xsl2", "sl3"])
    tol = float(cfg.params.get("tol", 1e-9))
    rows, worst = [], 0.0
    for name in frames:
        res = frame_residuals(catalog_frame(name))
        for k, v in res.items():
            rows.append((name, k, float(v)))
            worst = max(worst, float(v))
    return ScenarioResult(worst <= tol, {"max_residual": worst, "tol": tol, "frames": frames}, {"residuals": (("frame", "check", "residual"), rows)})


def run_deviation(cfg: ExperimentConfig) -> ScenarioResult:
    from .quotient import sample_haar
    from .timechange import deviation_exponent, siegel_observable

    p = cfg.params
    pts = sample_haar(int(p.get("n_samples", 8)), np.random.default_rng(cfg.seed), _lattice(cfg))
    grid = np.geomspace(float(p.get("t_min", 1e2)), float(p.get("t_max", 1e4)), int(p.get("n_grid", 9)))
    rep = deviation_exponent(pts, siegel_observable(), grid)
    limit = float(p.get("max_slope", 0.95))
    ok = rep.slope <= limit and rep.zero_mean_ok and not rep.degenerate
    summ = {"slope": rep.slope, "eta_emp": rep.eta_emp, "fit_residual": rep.residual, "max_slope": limit, "mean": rep.mean}
    return ScenarioResult(ok, summ, {"deviation": (("t", "sup_abs_integral"), [(float(t), float(s)) for t, s in rep.rows])})


def run_tracking_suite(cfg: ExperimentConfig) -> ScenarioResult:
    from .tracking import closed_form_suite, tracking_bounds_suite

    n = int(cfg.params.get("n", 1000))
    cf = closed_form_suite(n, cfg.seed)
    tb = tracking_bounds_suite(n, cfg.seed)
    ok = cf["max_error"] <= 1e-9 and not tb["violations"]
    rows = [(v["check"], v["a"], v["ubar"], v["u"], v["s0"], v["t0"]) for v in tb["violations"]]
    summ = {"closed_form_max_error": cf["max_error"], "bounds_accepted": tb["accepted"], "violations": len(tb["violations"])}
    return ScenarioResult(ok, summ, {"violations": (("check", "a", "ubar", "u", "s0", "t0"), rows)})


def run_polybound_suite(cfg: ExperimentConfig) -> ScenarioResult:
    from .polybound import coefficient_suite

    p = cfg.params
    r = coefficient_suite(int(p.get("n", 1000)), float(p.get("b", 0.05)), float(cfg.constants["eta"]), cfg.seed)
    rows = [(i, json.dumps(f["coeffs"]), json.dumps(f["intervals"])) for i, f in enumerate(r["failures"])]
    summ = {"n": r["n"], "checked": r["checked"], "skipped": r["skipped"], "failures": len(r["failures"])}
    return ScenarioResult(not r["failures"] and r["checked"] > 0, summ, {"failures": (("index", "coeffs", "intervals"), rows)})


def run_solovay(cfg: ExperimentConfig, out: Path) -> ScenarioResult:
    from .polybound import solovay_suite

    p = cfg.params
    path = out / "solovay_counterexamples.json"
    r = solovay_suite(int(p.get("trials", 10000)), float(p.get("b", 0.1)), float(p.get("theta", 0.01)), cfg.seed, falsifier_path=path)
    summ = {"accepted": r["accepted"], "draws": r["draws"], "counterexamples": len(r["counterexamples"])}
    return ScenarioResult(not r["counterexamples"], summ)


def run_basic_lemma(cfg: ExperimentConfig) -> ScenarioResult:
    from .blocks import BasicLemmaConfig, basic_lemma_pipeline, coboundary_testbed

    p = cfg.params
    c = cfg.constants
    off = p.get("offset", {"kind": "c", "value": 0.003})
    try:
        tb = coboundary_testbed(
            lam=float(p.get("lambda", 1000.0)),
            rho=float(c["rho"]),
            m=float(c["m"]),
            amplitude=float(p.get("amplitude", 1e-3)),
            offset=(off["kind"], float(off["value"])),
            seed=cfg.seed,
            module=int(off.get("module", 0)),
        )
    except Exception as exc:
        raise StageError("testbed", str(exc)) from exc
    bl = BasicLemmaConfig(
        rho=float(c["rho"]), eps=float(c["eps"]), eta=float(c["eta"]), b=c.get("b"), theta=c.get("theta"),
        m=float(c["m"]), kappa_tilde=float(c["kappa_tilde"]), tol=float(c["tol"]), seed=cfg.seed,
    )
    outp = basic_lemma_pipeline(tb.x, tb.y, tb.tau, tb.A, bl, tb.frame)
    man = outp.manifest()
    summ = {"found": bool(outp.found), "stage": outp.stage, "pipeline": man}
    ok = bool(outp.found) and all(v["pass"] for v in outp.bound_report.values())
    if outp.found:
        truth = tb.true_relative(outp.s_bar)
        from .liealg import decompose_near_identity

        tp = decompose_near_identity(truth, tb.frame)
        err = float(np.abs(tp.vector() - outp.g.vector()).max())
        summ["injected_recovery_error"] = err
        summ["injected_offset"] = {"kind": off["kind"], "value": float(off["value"])}
        ok = ok and err <= 1e-6
    tables = {
        "blocks": (("index", "s", "s_bar", "t", "t_bar", "class", "superblock"), outp.block_rows()),
        "superblocks": (("index", "s", "s_bar", "class", "components", "members"), outp.superblock_rows()),
    }
    return ScenarioResult(ok, summ, tables)


def _samples(cfg: ExperimentConfig, lat, n: int):
    from .quotient import sample_haar

    return sample_haar(n, np.random.default_rng(cfg.seed + 1), lat)


def run_transport(cfg: ExperimentConfig) -> ScenarioResult:
    from .rigidity import check_normalises, normaliser_transport
    from .timechange import TimeChange

    lat = _lattice(cfg)
    _, alpha, psi = _coboundary(cfg, lat)
    g = _g1(cfg, lat)
    pts = _samples(cfg, lat, int(cfg.params.get("n_samples", 10)))
    tr = normaliser_transport(psi, g, pts, alpha, TimeChange.unit())
    nres = check_normalises(tr.Phi, tr.c, tr.frame)
    tol = float(cfg.params.get("tol", 1e-6))
    summ = {
        "c": tr.c, "Phi": tr.Phi_params.vector().tolist(), "spread": tr.spread,
        "max_cocycle_residual": tr.max_cocycle_residual, "normalises_residual": nres, "flags": tr.flags,
    }
    rows = [(i, t, lhs, rhs, r) for i, t, lhs, rhs, r in tr.cocycle_residuals]
    ok = tr.max_cocycle_residual <= tol and nres <= 1e-8
    return ScenarioResult(ok, summ, {"transport": (("sample", "t", "beta_difference", "z_difference", "residual"), rows)})


def run_cohomology(cfg: ExperimentConfig) -> ScenarioResult:
    from .rigidity import cohomology_residual, normaliser_transport
    from .timechange import TimeChange

    lat = _lattice(cfg)
    _, alpha, psi = _coboundary(cfg, lat)
    g = _g1(cfg, lat)
    p = cfg.params
    pts = _samples(cfg, lat, int(p.get("n_samples", 3)))
    unit = TimeChange.unit()
    tr = normaliser_transport(psi, g, pts, alpha, unit)
    grid = np.linspace(float(p.get("t_max", 100.0)) / int(p.get("n_grid", 20)), float(p.get("t_max", 100.0)), int(p.get("n_grid", 20)))
    rows, worst = [], 0.0
    for i, x in enumerate(pts):
        r = cohomology_residual(alpha, unit, psi, tr, g, x, grid)
        worst = max(worst, r["max_residual"])
        rows += [(i, t, lhs, rhs, res) for t, lhs, rhs, res in r["rows"]]
    tol = float(p.get("tol", 1e-5))
    return ScenarioResult(worst <= tol, {"max_residual": worst, "tol": tol, "c": tr.c}, {"cohomology": (("sample", "t", "lhs", "rhs", "residual"), rows)})


def run_psi_t(cfg: ExperimentConfig) -> ScenarioResult:
    from .rigidity import psi_t_convergence

    lat = _lattice(cfg)
    f, _, psi = _coboundary(cfg, lat)
    p = cfg.params
    pts = _samples(cfg, lat, int(p.get("n_samples", 20)))
    grid = [float(t) for t in p.get("t_grid", [2, 4, 6, 8, 10, 12])]
    sup_f = psi.sup_transfer(seed=cfg.seed)
    rep = psi_t_convergence(psi, pts, grid, sup_f=sup_f)
    slack = float(p.get("slack", 1e-3))
    ok = rep.max_ratio <= 1 + slack and rep.monotone_trend and rep.equivariance <= 1e-8
    summ = {"sup_f": sup_f, "max_ratio": rep.max_ratio, "pooled_rate": rep.pooled_rate, "equivariance": rep.equivariance, "flags": rep.flags}
    return ScenarioResult(ok, summ, {"psi_t": (("sample", "t", "distance"), rep.rows())})


@dataclass(frozen=True)
class Scenario:
    name: str
    reference: str
    description: str
    runner: Callable


SCENARIOS: dict = {
    s.name: s
    for s in [
        Scenario("triple-check", "sl(2)-triples and Jordan bases", "bracket and ladder residuals on catalog frames", run_triple_check),
        Scenario("deviation", "sub-polynomial ergodic deviations", "log-log slope of orbit integrals of a zero-mean observable", run_deviation),
        Scenario("tracking-suite", "tracking formulas and maximal-tracking bounds", "closed forms vs matrix oracle and the tracking inequalities", run_tracking_suite),
        Scenario("polybound-suite", "coefficient bounds on b-close families", "randomized coefficient-bound suite", run_polybound_suite),
        Scenario("solovay", "Solovay's lemma", "falsifier search over random separated collections", run_solovay),
        Scenario("basic-lemma", "Basic Lemma (two nearby orbits)", "blocks, superblocks and the recovered relative position", run_basic_lemma),
        Scenario("transport", "normaliser transport of a conjugacy", "Phi, beta and the transport cocycle relation", run_transport),
        Scenario("cohomology", "cohomology corollary of the transport", "residual of the integrated cohomology identity", run_cohomology),
        Scenario("psi-t", "renormalized conjugacies and their limit", "decay of d(psi_t(x), zeta(x))", run_psi_t),
    ]
}


def list_scenarios() -> list:
    return [{"name": s.name, "reference": s.reference, "description": s.description} for s in SCENARIOS.values()]


# ---------------------------------------------------------------- output


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    return x


def write_outputs(out: Path, manifest: dict, tables: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.yaml").write_text(yaml.safe_dump(_plain(manifest), sort_keys=False))
    for name, (header, rows) in tables.items():
        with open(out / f"{name}.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(header)
            for r in rows:
                wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def run(cfg: ExperimentConfig) -> tuple:
    """Execute one scenario; returns ``(exit code, manifest)``."""
    errs = validate(cfg)
    manifest = {"scenario": cfg.scenario, "seed": cfg.seed, "config": cfg.to_dict(), "units": UNITS}
    if errs:
        manifest.update(status="invalid-config", errors=errs)
        return EXIT_INVALID, manifest
    manifest["constants_chain"] = constants_chain(cfg)
    out = Path(cfg.out)
    sc = SCENARIOS[cfg.scenario]
    np.random.seed(cfg.seed)
    try:
        res = sc.runner(cfg, out) if sc.name == "solovay" else sc.runner(cfg)
    except StageError as exc:
        manifest.update(status="stage-error", error={"stage": exc.stage, "message": str(exc)})
        write_outputs(out, manifest, {})
        return EXIT_FAILED, manifest
    except Exception as exc:
        manifest.update(status="stage-error", error={"stage": cfg.scenario, "type": type(exc).__name__, "message": str(exc)})
        write_outputs(out, manifest, {})
        return EXIT_FAILED, manifest
    manifest.update(status="pass" if res.passed else "hypothesis-failed", reference=sc.reference, result=res.summary)
    write_outputs(out, manifest, res.tables)
    return (EXIT_OK if res.passed else EXIT_FAILED), manifest


def _build_config(args) -> ExperimentConfig:
    d = load_config(args.config)
    if getattr(args, "scenario", None):
        d["scenario"] = args.scenario
    if getattr(args, "seed", None) is not None:
        d["seed"] = args.seed
    if getattr(args, "out", None):
        d["out"] = args.out
    return ExperimentConfig.from_dict(d)


def main(argv: Optional[list] = None) -> int:
    ap = argparse.ArgumentParser(prog="artifact", description="Time-change rigidity experiments")
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name in ("run", "validate"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="YAML or JSON configuration")
        sp.add_argument("--scenario", help="scenario name (overrides the config)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
    sub.add_parser("list")
    args = ap.parse_args(argv)
    if args.cmd == "list":
        for s in list_scenarios():
            print(f"{s['name']:16s} {s['reference']}: {s['description']}")
        return EXIT_OK
    try:
        cfg = _build_config(args)
    except (ValueError, TypeError, OSError, yaml.YAMLError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.cmd == "validate":
        errs = validate(cfg)
        for e in errs:
            print(f"invalid: {e}", file=sys.stderr)
        if not errs:
            print("config ok")
        return EXIT_INVALID if errs else EXIT_OK
    t0 = time.perf_counter()
    code, man = run(cfg)
    for e in man.get("errors", []):
        print(f"invalid: {e}", file=sys.stderr)
    if "error" in man:
        print(f"stage error: {man['error']}", file=sys.stderr)
    print(f"{cfg.scenario}: {man['status']} ({time.perf_counter() - t0:.1f} s) -> {cfg.out}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
