"""Implicit midpoint time stepping, divergence diagnostics and checkpoints.

The midpoint rule reproduces the discrete energy balance exactly: over one
step ``E(U1) - E(U0) = -dt * flux((U0 + U1) / 2)`` up to the linear solver
residual, which is controlled in the energy norm.
"""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, gmres

from .energy import EnergyTrace, boundary_dissipation, energy
from .errors import (
    CheckpointError,
    GridMismatch,
    InconsistentScenario,
    LinearSolveFailure,
)
from .grid import ENUMERATION_VERSION, BoxGrid
from .operators import DiscreteSystem, FieldState, _check

log = logging.getLogger(__name__)

DEFAULT_DIVERGENCE_CAP = 6000


@dataclass(frozen=True)
class TimeSteppingConfig:
    dt: float
    t_end: float
    solver_tol: float = 1e-10
    max_iters: int = 2000
    record_every: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if not 0 < self.solver_tol <= 1e-4:
            raise ValueError("solver_tol must lie in (0, 1e-4]")
        if self.max_iters < 1 or self.record_every < 1:
            raise ValueError("max_iters and record_every must be positive")

    @property
    def n_steps(self) -> int:
        # tolerate t_end / dt landing a hair off an integer
        return int(np.floor(self.t_end / self.dt + 1e-9))


# ---------------------------------------------------------------------------
# initial conditions


def _gaussian(x, center, width):
    r2 = np.sum((x - np.asarray(center, dtype=float)) ** 2, axis=-1)
    return np.exp(-r2 / width**2)


@dataclass(frozen=True)
class GaussianDisplacement:
    center: Sequence[float]
    width: float
    amplitude: float = 1.0
    direction: Sequence[float] = (1.0, 0.0, 0.0)

    def displacement(self, x):
        d = np.asarray(self.direction, dtype=float)
        return self.amplitude * _gaussian(x, self.center, self.width)[:, None] * d


@dataclass(frozen=True)
class VectorPotential:
    """Either a Gaussian bump ``amp * dir * exp(-|x-c|^2/w^2)`` or an affine map ``A x + b``."""

    kind: str = "gaussian"
    center: Sequence[float] = (0.5, 0.5, 0.5)
    width: float = 0.2
    amplitude: float = 1.0
    direction: Sequence[float] = (0.0, 0.0, 1.0)
    matrix: Sequence[Sequence[float]] | None = None
    offset: Sequence[float] = (0.0, 0.0, 0.0)

    def __call__(self, x):
        if self.kind == "affine":
            return x @ np.asarray(self.matrix, dtype=float).T + np.asarray(self.offset, dtype=float)
        d = np.asarray(self.direction, dtype=float)
        return self.amplitude * _gaussian(x, self.center, self.width)[:, None] * d


@dataclass(frozen=True)
class SolenoidalEM:
    """``H0`` from the discrete curl of ``magnetic``, ``E0`` from the weak curl of ``electric``.

    Both constructions make the fields exactly orthogonal to the discrete
    gradient test spaces used by :func:`divergence_residual`.
    """

    magnetic: VectorPotential | None = None
    electric: VectorPotential | None = None


@dataclass(frozen=True)
class Mixed:
    parts: tuple


@dataclass(frozen=True)
class Scenario:
    name: str
    recipe: GaussianDisplacement | SolenoidalEM | Mixed


def _recipe_parts(recipe):
    if isinstance(recipe, Mixed):
        for p in recipe.parts:
            yield from _recipe_parts(p)
    else:
        yield recipe


def _validate_recipe(recipe, grid: BoxGrid):
    for part in _recipe_parts(recipe):
        if isinstance(part, GaussianDisplacement):
            c = np.asarray(part.center, dtype=float)
            if c.shape != (3,) or np.any(c < 0) or np.any(c > np.array(grid.lengths)):
                raise InconsistentScenario(f"Gaussian center {tuple(c)} lies outside the box")
            if not part.width > 0:
                raise InconsistentScenario("Gaussian width must be positive")
            if not np.any(part.direction):
                raise InconsistentScenario("Gaussian direction must be non-zero")
        elif isinstance(part, SolenoidalEM):
            for pot in (part.magnetic, part.electric):
                if pot is None:
                    continue
                if pot.kind == "affine" and pot.matrix is None:
                    raise InconsistentScenario("affine potential needs a matrix")
                if pot.kind == "gaussian" and not pot.width > 0:
                    raise InconsistentScenario("potential width must be positive")
                if pot.kind not in ("affine", "gaussian"):
                    raise InconsistentScenario(f"unknown potential kind {pot.kind!r}")
        else:
            raise InconsistentScenario(f"unsupported recipe {part!r}")


class DivergenceResidual(NamedTuple):
    div_d: float
    div_muh: float


class InitialState(NamedTuple):
    state: FieldState
    divergence: DivergenceResidual


def init_state(scenario: Scenario, sys: DiscreteSystem) -> InitialState:
    grid = sys.grid
    _validate_recipe(scenario.recipe, grid)
    x = grid.nodes
    n = sys.n
    u, v, E, H = (np.zeros(n) for _ in range(4))
    for part in _recipe_parts(scenario.recipe):
        if isinstance(part, GaussianDisplacement):
            u += part.displacement(x).ravel()
        else:
            if part.magnetic is not None:
                psi = part.magnetic(x).ravel()
                H += sys.mass_solve(sys.curl_adjoint @ psi)
            if part.electric is not None:
                phi = part.electric(x).ravel()
                E += sys.mass_solve(sys.curl @ phi)
    state = FieldState(u, v, E, H, 0.0)
    div = divergence_residual(sys, state)
    log.info("initial divergence residuals: div D %.3e, div muH %.3e", *div)
    return InitialState(state, div)


# ---------------------------------------------------------------------------
# divergence diagnostics


@lru_cache(maxsize=8)
def _gradient_spaces(sys: DiscreteSystem):
    """Orthonormal bases of the discrete gradient test spaces.

    Magnetic: kernel of ``curl``.  Electric: kernel of ``curl_adjoint``
    intersected with fields of vanishing tangential trace.
    """
    C = sys.curl.toarray()
    W_h = scipy.linalg.null_space(C, rcond=1e-10)
    stacked = np.vstack([sys.curl_adjoint.toarray(), sys.Btau.toarray()])
    W_d = scipy.linalg.null_space(stacked, rcond=1e-10)
    return W_d, W_h


def divergence_residual(
    sys: DiscreteSystem, s: FieldState, *, relative: bool = True, cap: int = DEFAULT_DIVERGENCE_CAP
) -> DivergenceResidual:
    """Weak divergence of ``D = eps E + e gamma(u)`` and of ``mu H``.

    Each residual is the largest pairing with a unit discrete gradient test
    field, i.e. the norm of the projection of the weak-form vector onto the
    test space; with ``relative=True`` it is divided by the norm of the weak
    form vector itself.  Grids above ``cap`` dofs per field return NaN.
    """
    _check(sys, s)
    if sys.n > cap:
        return DivergenceResidual(float("nan"), float("nan"))
    W_d, W_h = _gradient_spaces(sys)
    d = sys.material.eps * (sys.M0 @ s.E) + sys.piezo @ s.u
    b = sys.material.mu * (sys.M0 @ s.H)
    out = []
    for vec, W in ((d, W_d), (b, W_h)):
        res = float(np.linalg.norm(W.T @ vec))
        if relative:
            nrm = float(np.linalg.norm(vec))
            res = res / nrm if nrm > 0 else 0.0
        out.append(res)
    return DivergenceResidual(*out)


# ---------------------------------------------------------------------------
# time stepping


class MidpointStepper:
    """Solves ``(I - dt/2 L) U1 = (I + dt/2 L) U0`` with restarted GMRES.

    The operator is applied matrix-free with block mass solves.  The
    iteration starts from ``U0`` so the correction stays in the range of the
    generator, which keeps linear invariants (the weak divergences) intact.
    Convergence is judged on the residual measured in the energy norm.
    """

    def __init__(self, sys: DiscreteSystem, dt: float, tol: float = 1e-10, max_iters: int = 2000, restart: int = 60):
        self.sys, self.dt, self.tol, self.max_iters = sys, float(dt), float(tol), int(max_iters)
        self.restart = restart
        n = sys.size
        half = 0.5 * self.dt
        self.op = LinearOperator((n, n), matvec=lambda x: x - half * sys.apply(x), dtype=float)
        self.last_iterations = 0

    def _norm(self, x):
        return np.sqrt(max(self.sys.inner(x, x), 0.0))

    def step(self, x0, step_index=None):
        sys, half = self.sys, 0.5 * self.dt
        b = x0 + half * sys.apply(x0)
        bnorm = self._norm(b)
        if bnorm == 0.0:
            self.last_iterations = 0
            return np.zeros_like(x0)
        x = x0.copy()
        rtol = 0.1 * self.tol
        iters = 0

        def count(_):
            nonlocal iters
            iters += 1

        for _ in range(6):
            budget = self.max_iters - iters
            if budget <= 0:
                break
            x, info = gmres(
                self.op, b, x0=x, rtol=rtol, atol=0.0, restart=self.restart,
                maxiter=max(1, budget // self.restart + 1), callback=count, callback_type="pr_norm",
            )
            r = b - self.op @ x
            rel = self._norm(r) / bnorm
            if rel <= self.tol:
                self.last_iterations = iters
                return x
            rtol = max(rtol * self.tol / rel * 0.5, 1e-15)
        raise LinearSolveFailure(
            f"midpoint solve stalled at relative residual {rel:.2e} > {self.tol:.1e} after {iters} iterations",
            step=step_index,
        )


def step_midpoint(sys: DiscreteSystem, s: FieldState, cfg: TimeSteppingConfig, stepper: MidpointStepper | None = None) -> FieldState:
    _check(sys, s)
    stepper = stepper or MidpointStepper(sys, cfg.dt, cfg.solver_tol, cfg.max_iters)
    x1 = stepper.step(s.to_vector())
    return FieldState.from_vector(x1, time=s.time + cfg.dt)


@dataclass
class RunResult:
    trace: EnergyTrace
    final: FieldState
    iterations: list = field(default_factory=list)


def run(
    scenario_or_state,
    sys: DiscreteSystem,
    cfg: TimeSteppingConfig,
    *,
    diagnostics: bool = True,
    t_end: float | None = None,
) -> RunResult:
    """Integrate from ``t = 0`` (or a checkpointed state) to ``t_end``.

    Every ``record_every`` steps (and at the last step) the trace stores the
    energy, instantaneous boundary flux and divergence residuals; the
    dissipated energy is accumulated from midpoint fluxes at every step.
    """
    if isinstance(scenario_or_state, Scenario):
        s = init_state(scenario_or_state, sys).state
    else:
        s = scenario_or_state
        _check(sys, s)
    t_end = cfg.t_end if t_end is None else t_end
    n_steps = int(np.floor((t_end - s.time) / cfg.dt + 1e-9))
    stepper = MidpointStepper(sys, cfg.dt, cfg.solver_tol, cfg.max_iters)

    rows = []
    cum = 0.0

    def record(state, cum):
        e = energy(sys, state)
        f = boundary_dissipation(sys, state)
        div = divergence_residual(sys, state) if diagnostics else DivergenceResidual(np.nan, np.nan)
        rows.append((state.time, e, f, cum, div.div_d, div.div_muh))

    record(s, cum)
    x = s.to_vector()
    t0 = s.time
    iterations = []
    for k in range(1, n_steps + 1):
        try:
            x1 = stepper.step(x, step_index=k)
        except LinearSolveFailure as exc:
            exc.step = k
            raise
        iterations.append(stepper.last_iterations)
        mid = 0.5 * (x + x1)
        cum += cfg.dt * sys.dissipation(mid)
        x = x1
        if k % cfg.record_every == 0 or k == n_steps:
            record(FieldState.from_vector(x, time=t0 + k * cfg.dt), cum)
    final = FieldState.from_vector(x, time=t0 + n_steps * cfg.dt)
    cols = list(zip(*rows))
    trace = EnergyTrace(*cols, meta={"dt": cfg.dt, "solver_tol": cfg.solver_tol})
    return RunResult(trace, final, iterations)


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_MAGIC = b"PIEZOCK1"
CHECKPOINT_VERSION = 1


def checkpoint_save(s: FieldState, path, grid: BoxGrid, solver_tol: float = float("nan")) -> None:
    """Binary container: magic, header length (u64 LE), JSON header, float64 LE fields.

    Fields are written in the order ``u, v, E, H``, each node-major and
    component-minor.
    """
    header = {
        "format_version": CHECKPOINT_VERSION,
        "enumeration_version": ENUMERATION_VERSION,
        "grid": grid.signature,
        "time": s.time,
        "solver_tol": solver_tol,
        "dofs_per_field": s.n,
        "dtype": "<f8",
    }
    if s.n != grid.dofs_per_field:
        raise GridMismatch(f"state has {s.n} dofs per field, grid has {grid.dofs_per_field}")
    hb = json.dumps(header, sort_keys=True).encode()
    try:
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<Q", len(hb)))
            fh.write(hb)
            fh.write(s.to_vector().astype("<f8").tobytes())
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc


def checkpoint_load(path, grid: BoxGrid | None = None) -> FieldState:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if raw[:8] != CHECKPOINT_MAGIC or len(raw) < 16:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    try:
        header = json.loads(raw[16:16 + hlen])
        n = int(header["dofs_per_field"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    body = raw[16 + hlen:]
    if len(body) != 4 * n * 8:
        raise CheckpointError(f"{path}: truncated, expected {4 * n * 8} bytes of field data, found {len(body)}")
    if header.get("format_version") != CHECKPOINT_VERSION or header.get("enumeration_version") != ENUMERATION_VERSION:
        raise CheckpointError(f"{path}: unsupported format version")
    if grid is not None and header["grid"] != grid.signature:
        raise GridMismatch(f"checkpoint grid {header['grid']} does not match {grid.signature}")
    x = np.frombuffer(body, dtype="<f8").astype(float)
    return FieldState.from_vector(x, time=float(header["time"]))
