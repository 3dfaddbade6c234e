"""Batch front end: ``piezo simulate | verify | sweep | resume``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import dynamics
from .config import ScenarioConfig, default_dt, parse_config, validate_config
from .dynamics import checkpoint_load, checkpoint_save, run
from .energy import (
    audit_balance,
    dense_cap,
    dumps,
    fit_decay,
    observability_report,
    spectral_abscissa,
)
from .errors import ConfigError, InsufficientData, NonPositiveEnergy, PiezoError, TooLargeForDense
from .grid import c_alpha, star_shaped_delta
from .materials import AlphaExpression, GeneralQ, MaterialSet, validate_material
from .operators import assemble, green_identity_residuals
from .resolvent import coercivity_estimate, dissipativity_check

log = logging.getLogger("piezostab")

SWEEP_PARAMETERS = ("gainA", "alpha_scale", "alpha_gradient_scale", "dt", "cells")
WITHIN = "within theorem hypotheses"
OUTSIDE = "outside theorem hypotheses"


class StageError(PiezoError):
    def __init__(self, stage, exc):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PiezoError as exc:
        raise StageError(name, exc) from exc
    except (ValueError, ArithmeticError) as exc:
        raise StageError(name, exc) from exc


def _system(cfg: ScenarioConfig):
    grid = cfg.build_grid()
    material = cfg.build_material()
    system = assemble(grid, material)
    testing = cfg.testing
    if testing is not None and testing.corrupt_pair:
        system = _corrupt(system, testing.corrupt_pair)
    return system


def _corrupt(system, pair):
    """Test hook: perturb one entry of an adjoint block."""
    block = getattr(system, pair)
    bad = sp.csr_matrix(block.T, copy=True)
    if bad.nnz:
        bad.data[bad.nnz // 2] += 1e-6 * (abs(bad.data).max() or 1.0)
    else:
        bad = bad.tolil()
        bad[0, 0] = 1e-6
        bad = bad.tocsr()
    return system.with_pairs(**{f"{pair}_adjoint": bad})


def geometry_report(cfg: ScenarioConfig, material: MaterialSet, grid):
    star = star_shaped_delta(grid, cfg.analysis.x0)
    alpha = material.alpha
    ca = c_alpha(grid, alpha) if alpha is not None else None
    return star, ca


def _write(outdir: Path, name: str, text: str):
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / name).write_text(text)


def _analyse(cfg: ScenarioConfig, system, result) -> dict:
    trace = result.trace
    material = system.material
    alpha0 = validate_material(material).alpha0
    star, ca = geometry_report(cfg, material, system.grid)
    audit = audit_balance(trace, cfg.analysis.audit_tol)
    summary = {
        "scenario": cfg.scenario.name,
        "energy_0": float(trace.energy[0]),
        "energy_T": float(trace.energy[-1]),
        "t_start": float(trace.times[0]),
        "T": float(trace.times[-1]),
        "dt": cfg.stepping.dt,
        "n_records": len(trace),
        "audit_residual": audit.residual,
        "audit_tol": audit.tolerance,
        "audit": "PASS" if audit.passed else "FAIL",
        "delta": star.delta,
        "x0": list(star.x0),
        "c_alpha": ca,
        "alpha0": alpha0,
        "q_is_scalar": bool(material.q.is_scalar),
    }
    window = cfg.analysis.fit_window
    try:
        fit = fit_decay(trace, window)
        summary.update(omega=fit.omega, M=fit.M, r_squared=fit.r_squared if fit.r_squared_defined else None,
                       fit_window=list(fit.fit_window), omega_status="fitted")
        if not fit.r_squared_defined:
            summary["omega_status"] = "undefined (constant energy)"
    except NonPositiveEnergy:
        summary.update(omega=None, M=None, r_squared=None, omega_status="undefined (zero energy)")
    except InsufficientData as exc:
        summary.update(omega=None, M=None, r_squared=None, omega_status=f"undefined ({exc})")
    obs = observability_report(trace)
    summary["observability"] = obs.to_dict()

    hypotheses = star.is_strict and material.q.is_scalar
    summary["decay_claim"] = WITHIN if hypotheses else OUTSIDE
    decayed = summary["omega"] is not None and summary["omega"] > 0 and (summary["r_squared"] or 0) >= 0.9
    summary["decay_verified"] = bool(hypotheses and decayed and audit.passed)
    return summary


def _emit(cfg: ScenarioConfig, outdir: Path, system, result, summary):
    formats = cfg.output.formats
    if "csv" in formats:
        _write(outdir, "trace.csv", result.trace.to_csv())
    if "json" in formats:
        _write(outdir, "summary.json", dumps(summary))
    if "state" in formats:
        outdir.mkdir(parents=True, exist_ok=True)
        checkpoint_save(result.final, outdir / "final.state", system.grid, cfg.stepping.solver_tol)


def command_simulate(cfg: ScenarioConfig, outdir=None) -> dict:
    outdir = Path(outdir or cfg.output.directory)
    system = _stage("assemble", _system, cfg)
    scenario = cfg.build_scenario()
    init = _stage("init", dynamics.init_state, scenario, system)
    result = _stage("run", run, init.state, system, cfg.build_stepping())
    summary = _stage("analyse", _analyse, cfg, system, result)
    summary["initial_divergence"] = {"divD_res": init.divergence.div_d, "divMuH_res": init.divergence.div_muh}
    _emit(cfg, outdir, system, result, summary)
    return summary


def command_resume(checkpoint, cfg: ScenarioConfig, outdir=None) -> dict:
    outdir = Path(outdir or cfg.output.directory)
    system = _stage("assemble", _system, cfg)
    state = _stage("load", checkpoint_load, checkpoint, system.grid)
    result = _stage("run", run, state, system, cfg.build_stepping())
    summary = _stage("analyse", _analyse, cfg, system, result)
    summary["resumed_from"] = str(checkpoint)
    _emit(cfg, outdir, system, result, summary)
    return summary


def _check(status, **values):
    return {"status": status, **values}


def command_verify(cfg: ScenarioConfig, outdir=None, seed: int = 0) -> dict:
    outdir = Path(outdir or cfg.output.directory)
    system = _stage("assemble", _system, cfg)
    checks = {}

    g = green_identity_residuals(system)
    checks["green_identity"] = _check("PASS" if g.max <= 1e-13 else "FAIL", **g._asdict())

    d = dissipativity_check(system, samples=100, seed=seed)
    ok = d.margin <= 1e-11 and d.min_resolvent_gap >= -1e-11
    checks["dissipativity"] = _check("PASS" if ok else "FAIL", **d._asdict())

    try:
        c = coercivity_estimate(system)
        q_free = coercivity_estimate(_system_without_q(system))
        q_shift = abs(c.c_min - q_free.c_min)
        ok = c.c_min > 0 and c.c_min >= c.lower_bound * (1 - 1e-10) and c.skew_residual <= 1e-13 and q_shift <= 1e-10
        checks["coercivity"] = _check("PASS" if ok else "FAIL", **c._asdict(), q_independence=q_shift)
    except TooLargeForDense as exc:
        checks["coercivity"] = _check("SKIPPED", reason=str(exc))

    try:
        s = spectral_abscissa(system)
        ok = s.abscissa < 0 and s.max_real_overall <= 1e-10
        checks["spectral_abscissa"] = _check("PASS" if ok else "FAIL", **s._asdict())
    except TooLargeForDense as exc:
        checks["spectral_abscissa"] = _check("SKIPPED", reason=str(exc), cap=dense_cap())

    shift = q_normal_shift(system, seed=seed)
    checks["q_normal_invariance"] = _check("PASS" if shift <= 1e-13 else "FAIL", max_difference=shift)

    report = {"checks": checks, "all_passed": all(c["status"] != "FAIL" for c in checks.values())}
    _write(outdir, "verify.json", dumps(report))
    return report


def _system_without_q(system):
    return assemble(system.grid, replace(system.material, q=GeneralQ(np.zeros((3, 3)))))


class _NormalShiftedQ:
    """``Q + rho_f nu_f nu_f^T`` with one random ``rho`` per boundary face."""

    is_scalar = False

    def __init__(self, base, rho, normals):
        self.base, self.rho, self.normals = base, rho, normals

    def face_values(self, points, face_ids=None):
        q = np.asarray(self.base.face_values(points, face_ids), dtype=float)
        ids = np.arange(len(self.rho)) if face_ids is None else face_ids
        nn = self.rho[ids, None, None] * np.einsum("fi,fj->fij", self.normals[ids], self.normals[ids])
        return q + nn[:, None]


def q_normal_shift(system, seed: int = 0) -> float:
    """Largest change of the boundary coupling blocks under ``Q -> Q + rho nu nu^T``."""
    faces = system.grid.faces
    rho = np.random.default_rng(seed).standard_normal(len(faces))
    shifted = _NormalShiftedQ(system.material.q, rho, faces.normal)
    other = assemble(system.grid, replace(system.material, q=shifted))
    diff = max(abs(system.tq - other.tq).max(), abs(system.tq_adjoint - other.tq_adjoint).max())
    return float(diff)


def _apply_sweep_value(cfg: ScenarioConfig, parameter: str, value: float) -> ScenarioConfig:
    data = cfg.to_dict()
    if parameter == "gainA":
        data["material"]["gainA"] = value
    elif parameter in ("alpha_scale", "alpha_gradient_scale"):
        q = data["material"]["Q"]
        if "scalar_alpha_expr" in q:
            base = cfg.material.Q.scalar_alpha_expr.build()
        elif "identity_scale" in q:
            base = AlphaExpression(constant=q["identity_scale"])
        else:
            raise ValueError(f"{parameter} sweeps need a scalar Q")
        scaled = base.scaled(**({"scale": value} if parameter == "alpha_scale" else {"gradient_scale": value}))
        data["material"]["Q"] = {
            "scalar_alpha_expr": {
                "constant": scaled.constant,
                "gradient": list(scaled.gradient),
                "modes": [
                    {"kind": k, "amplitude": a, "wavevector": list(w), "phase": p} for k, a, w, p in scaled.modes
                ],
            }
        }
    elif parameter == "dt":
        data["stepping"]["dt"] = value
    elif parameter == "cells":
        n = int(round(value))
        data["grid"]["cells"] = [n, n, n]
        if cfg.stepping.dt == default_dt(cfg):
            # keep the CFL-based default on the refined grid
            data["stepping"].pop("dt", None)
    else:
        raise ValueError(f"unknown sweep parameter {parameter!r}; choose from {SWEEP_PARAMETERS}")
    return validate_config(data)


def _sweep_one(args):
    cfg_dict, parameter, value, outdir = args
    cfg = validate_config(cfg_dict)
    try:
        cfg_v = _apply_sweep_value(cfg, parameter, value)
        summary = command_simulate(cfg_v, outdir)
        return {
            "value": value,
            "omega": summary["omega"],
            "r_squared": summary["r_squared"],
            "audit_residual": summary["audit_residual"],
            "c_alpha": summary["c_alpha"],
            "delta": summary["delta"],
            "status": "ok" if summary["audit"] == "PASS" else "audit FAIL",
        }
    except (PiezoError, ValueError, ConfigError) as exc:
        return {"value": value, "omega": None, "r_squared": None, "audit_residual": None,
                "c_alpha": None, "delta": None, "status": f"error: {exc}"}


SWEEP_COLUMNS = ("value", "omega", "r_squared", "audit_residual", "c_alpha", "delta", "status")


def command_sweep(cfg: ScenarioConfig, parameter: str, values, outdir=None, jobs: int = 1) -> list:
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"unknown sweep parameter {parameter!r}; choose from {SWEEP_PARAMETERS}")
    outdir = Path(outdir or cfg.output.directory)
    tasks = [(cfg.to_dict(), parameter, float(v), outdir / f"{parameter}_{i:03d}") for i, v in enumerate(values)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(_sweep_one, tasks))
    else:
        rows = [_sweep_one(t) for t in tasks]
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow(["" if r[c] is None else (repr(float(r[c])) if c != "status" else r[c]) for c in SWEEP_COLUMNS])
    return rows


def _parse_values(text):
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    common.add_argument("-o", "--output", help="output directory (overrides the config)")
    p = argparse.ArgumentParser(prog="piezo", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="run a scenario and analyse its energy")
    s.add_argument("config")
    s = sub.add_parser("verify", parents=[common], help="structural checks of the discrete system")
    s.add_argument("config")
    s = sub.add_parser("sweep", parents=[common], help="simulate over a parameter range")
    s.add_argument("config")
    s.add_argument("--param", required=True, choices=SWEEP_PARAMETERS)
    s.add_argument("--values", required=True, type=_parse_values, help="comma separated list")
    s.add_argument("--jobs", type=int, default=1)
    s = sub.add_parser("resume", parents=[common], help="continue a run from a checkpoint")
    s.add_argument("checkpoint")
    s.add_argument("config")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        for msg in exc.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return 2
    try:
        if args.command == "simulate":
            command_simulate(cfg, args.output)
        elif args.command == "verify":
            report = command_verify(cfg, args.output)
            for name, c in report["checks"].items():
                print(f"{name}: {c['status']}")
            return 0 if report["all_passed"] else 1
        elif args.command == "sweep":
            command_sweep(cfg, args.param, args.values, args.output, args.jobs)
        elif args.command == "resume":
            command_resume(args.checkpoint, cfg, args.output)
    except StageError as exc:
        print(f"error in stage {exc.stage}: {exc}", file=sys.stderr)
        return 1
    except (PiezoError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
