"""Acceptance criteria, each at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary lists
one PASS/FAIL line per criterion.
"""
import time
from dataclasses import replace

import numpy as np
import pytest
from conftest import generic_material
from oracle import assemble_dense

from piezostab.cli import command_simulate
from piezostab.config import validate_config
from piezostab.dynamics import (
    GaussianDisplacement,
    Scenario,
    SolenoidalEM,
    TimeSteppingConfig,
    VectorPotential,
    init_state,
    run,
)
from piezostab.energy import EnergyTrace, audit_balance, fit_decay, spectral_abscissa
from piezostab.grid import build_grid
from piezostab.materials import GeneralQ, MaterialSet, ScalarQ
from piezostab.operators import FieldState, assemble, green_identity_residuals
from piezostab.resolvent import coercivity_estimate, dissipativity_check, solve_resolvent

PULSE_CONFIG = {
    "grid": {"lengths": [1, 1, 1], "cells": [8, 8, 8]},
    "material": {
        "elasticity": {"isotropic": {"lambda": 1.0, "mu_shear": 1.0}},
        "eps": 1.0,
        "mu": 1.0,
        "gainA": 1.0,
        "Q": {"identity_scale": 1.0},
    },
    "scenario": {"name": "pulse", "gaussian": {"center": [0.5, 0.5, 0.5], "width": 0.1, "direction": [1, 0, 0]}},
    "stepping": {"dt": 0.0625, "t_end": 200 * 0.0625, "solver_tol": 1e-11},
}


@pytest.fixture(scope="module")
def pulse_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("pulse")
    cfg = validate_config({**PULSE_CONFIG, "output": {"directory": str(out)}})
    t0 = time.perf_counter()
    summary = command_simulate(cfg)
    elapsed = time.perf_counter() - t0
    return out, summary, EnergyTrace.from_csv(out / "trace.csv"), elapsed


@pytest.fixture(scope="module")
def generic2():
    return assemble(build_grid((1.0, 0.8, 1.3), (2, 2, 2)), generic_material(7))


def test_criterion_1_green_identities(criterion):
    grid = build_grid((1.0, 0.8, 1.3), (2, 2, 2))
    m = generic_material(7)
    t0 = time.perf_counter()
    sys = assemble(grid, m)
    r = green_identity_residuals(sys)
    elapsed = time.perf_counter() - t0
    # each adjoint block against its own bilinear form, integrated independently
    ref = assemble_dense(grid, m, lambda x, nu: m.q.alpha(x[None])[0] * np.eye(3))
    dense = max(
        abs(getattr(sys, name).toarray() - ref[name]).max()
        for name in ("curl", "curl_adjoint", "piezo", "piezo_adjoint", "tq", "tq_adjoint")
    )
    ok = r.max <= 1e-13 and dense <= 1e-13 and elapsed < 1.0 and sys.piezo.count_nonzero() and sys.tq.count_nonzero()
    criterion(1, "discrete Green/transpose contracts", ok,
              f"transpose residual {r.max:.1e}, against direct forms {dense:.1e}, {elapsed:.2f}s")


def test_criterion_2_dissipativity_identity(criterion, generic2):
    t0 = time.perf_counter()
    rep = dissipativity_check(generic2, samples=100, seed=11)
    elapsed = time.perf_counter() - t0
    criterion(2, "discrete dissipativity identity", rep.margin <= 1e-11 and elapsed < 5.0,
              f"max defect {rep.margin:.1e} x |U|^2, {elapsed:.2f}s")


def test_criterion_3_energy_balance(criterion, pulse_run):
    _, summary, trace, elapsed = pulse_run
    audit = audit_balance(trace, 1e-8)
    steps = np.diff(trace.energy)
    monotone = bool(np.all(steps <= 0))
    ok = audit.passed and monotone and len(trace) == 201
    criterion(3, "energy balance on 8^3, 200 steps", ok,
              f"audit residual {audit.residual:.1e}, max energy increase {steps.max():.1e}, {elapsed:.0f}s")


def test_criterion_4_exponential_decay(criterion, pulse_run):
    _, summary, trace, _ = pulse_run
    T = trace.times[-1]
    fit = fit_decay(trace, (T / 2, T))
    ratio = trace.energy[-1] / trace.energy[0]
    ok = (
        ratio <= 0.1
        and fit.omega > 0
        and fit.r_squared >= 0.9
        and summary["decay_claim"] == "within theorem hypotheses"
        and summary["delta"] == 0.5
        and summary["c_alpha"] == 0.0
    )
    criterion(4, "exponential decay", ok,
              f"E(T)/E(0) {ratio:.1e}, omega {fit.omega:.3f}, r2 {fit.r_squared:.4f}, {summary['decay_claim']}")


def test_criterion_5_spectrum_vs_decay(criterion):
    t0 = time.perf_counter()
    sys = assemble(build_grid((1, 1, 1), (2, 2, 2)), MaterialSet.isotropic())
    s = spectral_abscissa(sys).abscissa
    # off-centre, tilted pulse so the slowest mode is excited
    sc = Scenario("tilted", GaussianDisplacement((0.3, 0.4, 0.6), 0.3, 1.0, (1.0, 0.2, 0.1)))
    tr = run(sc, sys, TimeSteppingConfig(0.05, 20.0, solver_tol=1e-11), diagnostics=False).trace
    fit = fit_decay(tr)
    rel = abs(fit.omega - 2 * abs(s)) / (2 * abs(s))
    elapsed = time.perf_counter() - t0
    criterion(5, "spectral abscissa vs fitted decay", s < 0 and rel <= 0.25 and elapsed < 60,
              f"s {s:.4f}, omega {fit.omega:.4f}, relative gap {rel:.1e}, {elapsed:.1f}s")


def test_criterion_6_q_normal_invariance(criterion):
    g = build_grid((1, 1, 1), (4, 4, 4))
    m = generic_material(8, q=ScalarQ(1.0))
    nn = np.einsum("fi,fj->fij", g.faces.normal, g.faces.normal)
    a = assemble(g, replace(m, q=GeneralQ(np.eye(3))))
    b = assemble(g, replace(m, q=GeneralQ(np.eye(3) + nn)))
    tol = 1e-11
    cfg = TimeSteppingConfig(0.05, 50 * 0.05, solver_tol=tol)
    sc = Scenario("p", GaussianDisplacement((0.4, 0.5, 0.6), 0.2, 1.0, (1, 1, 0)))
    xa = run(sc, a, cfg, diagnostics=False).final.to_vector()
    xb = run(sc, b, cfg, diagnostics=False).final.to_vector()
    d = xa - xb
    diff = np.sqrt(a.inner(d, d)) / np.sqrt(a.inner(xa, xa))
    criterion(6, "Q-normal invariance of trajectories", diff <= 10 * tol, f"relative H-distance {diff:.1e} after 50 steps")


def test_criterion_7_resolvent(criterion, generic2):
    rng = np.random.default_rng(12)
    x = rng.standard_normal(generic2.size)
    sol, _ = solve_resolvent(generic2, FieldState.from_vector(x - generic2.apply(x)))
    err = np.linalg.norm(sol.to_vector() - x) / np.linalg.norm(x)
    gap = dissipativity_check(generic2, samples=100, seed=13).min_resolvent_gap
    c = coercivity_estimate(generic2)
    c_q0 = coercivity_estimate(assemble(generic2.grid, replace(generic2.material, q=ScalarQ(0.0))))
    c_qi = coercivity_estimate(assemble(generic2.grid, replace(generic2.material, q=ScalarQ(1.0))))
    shift = max(abs(c.c_min - c_q0.c_min), abs(c_qi.c_min - c_q0.c_min))
    ok = err <= 1e-8 and gap >= 0 and c.c_min > 0 and shift <= 1e-10
    criterion(7, "resolvent well-posedness", ok,
              f"round trip {err:.1e}, min gap {gap:.2e}, c_min {c.c_min:.3f}, Q shift {shift:.1e}")


def test_criterion_8_divergence_propagation(criterion):
    sys = assemble(build_grid((1, 1, 1), (4, 4, 4)), generic_material(9, q=ScalarQ(1.0)))
    em = SolenoidalEM(
        VectorPotential(center=(0.4, 0.5, 0.55), width=0.3, direction=(0.2, 0.3, 1.0)),
        VectorPotential(center=(0.6, 0.45, 0.5), width=0.3, direction=(1.0, 0.0, 0.3)),
    )
    init = init_state(Scenario("em", em), sys)
    tol = 1e-10
    tr = run(init.state, sys, TimeSteppingConfig(0.02, 500 * 0.02, solver_tol=tol)).trace
    grow_d = float(np.max(tr.divD_res - tr.divD_res[0]))
    grow_h = float(np.max(tr.divMuH_res - tr.divMuH_res[0]))
    ok = len(tr) == 501 and grow_d <= 100 * tol and grow_h <= 100 * tol
    criterion(8, "divergence propagation over 500 steps", ok,
              f"relative growth div D {grow_d:.1e}, div muH {grow_h:.1e}")


def test_criterion_9_determinism(criterion, pulse_run, tmp_path):
    out, _, _, _ = pulse_run
    cfg = validate_config({**PULSE_CONFIG, "output": {"directory": str(tmp_path)}})
    command_simulate(cfg)
    same = (tmp_path / "trace.csv").read_bytes() == (out / "trace.csv").read_bytes()
    criterion(9, "byte-identical trace.csv on rerun", same, "compared two full runs")
