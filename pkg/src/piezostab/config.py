"""JSON scenario configuration.

A minimal file only needs ``grid``; everything else has defaults.  Example::

    {
      "grid": {"lengths": [1, 1, 1], "cells": [8, 8, 8]},
      "material": {
        "elasticity": {"isotropic": {"lambda": 1.0, "mu_shear": 1.0}},
        "eps": 1.0, "mu": 1.0, "gainA": 1.0,
        "Q": {"identity_scale": 1.0}
      },
      "scenario": {"name": "pulse",
                   "gaussian": {"center": [0.5, 0.5, 0.5], "width": 0.1}},
      "stepping": {"dt": 0.0625, "t_end": 12.5, "solver_tol": 1e-11},
      "analysis": {"audit_tol": 1e-8},
      "output": {"directory": "out"}
    }

``Q`` takes exactly one of ``identity_scale`` (``Q = s I``),
``scalar_alpha_expr`` (``Q = alpha(x) I``) or ``matrix_per_face`` (a single
3x3 matrix or one per boundary face in grid face order).
"""
from __future__ import annotations

import difflib
import json
from pathlib import Path
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .dynamics import (
    GaussianDisplacement,
    Mixed,
    Scenario,
    SolenoidalEM,
    TimeSteppingConfig,
    VectorPotential,
)
from .errors import ConfigError
from .grid import BoxGrid
from .materials import (
    AlphaExpression,
    ElasticityTensor,
    GeneralQ,
    MaterialSet,
    PiezoTensor,
    ScalarQ,
)


class ConfigParseError(ConfigError):
    pass


class ConfigValidationError(ConfigError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


Vec3 = List[float]


class GridCfg(_Strict):
    lengths: Vec3 = Field(min_length=3, max_length=3)
    cells: List[int] = Field(min_length=3, max_length=3)

    @model_validator(mode="after")
    def _check(self):
        if any(L <= 0 for L in self.lengths):
            raise ValueError("lengths must be positive")
        if any(n < 2 for n in self.cells):
            raise ValueError("cells must be >= 2 in every direction")
        return self


class IsotropicCfg(_Strict):
    lambda_: float = Field(1.0, alias="lambda")
    mu_shear: float = Field(1.0, gt=0)


class ElasticityCfg(_Strict):
    isotropic: Optional[IsotropicCfg] = None
    voigt21: Optional[List[float]] = Field(None, min_length=21, max_length=21)

    @model_validator(mode="after")
    def _one(self):
        if (self.isotropic is None) == (self.voigt21 is None):
            raise ValueError("give exactly one of 'isotropic' or 'voigt21'")
        return self


class AlphaModeCfg(_Strict):
    kind: Literal["sin", "cos"]
    amplitude: float
    wavevector: Vec3 = Field(min_length=3, max_length=3)
    phase: float = 0.0


class AlphaExprCfg(_Strict):
    constant: float = 1.0
    gradient: Vec3 = Field(default_factory=lambda: [0.0, 0.0, 0.0], min_length=3, max_length=3)
    modes: List[AlphaModeCfg] = Field(default_factory=list)

    def build(self) -> AlphaExpression:
        return AlphaExpression(
            constant=self.constant,
            gradient=tuple(self.gradient),
            modes=tuple((m.kind, m.amplitude, tuple(m.wavevector), m.phase) for m in self.modes),
        )


class QCfg(_Strict):
    identity_scale: Optional[float] = None
    scalar_alpha_expr: Optional[AlphaExprCfg] = None
    matrix_per_face: Optional[list] = None

    @model_validator(mode="after")
    def _one(self):
        given = [x is not None for x in (self.identity_scale, self.scalar_alpha_expr, self.matrix_per_face)]
        if sum(given) != 1:
            raise ValueError("give exactly one of 'identity_scale', 'scalar_alpha_expr', 'matrix_per_face'")
        if self.matrix_per_face is not None:
            arr = np.asarray(self.matrix_per_face, dtype=float)
            if arr.shape[-2:] != (3, 3) or arr.ndim not in (2, 3):
                raise ValueError("matrix_per_face must be a 3x3 matrix or a list of them")
        return self


def _zero_piezo():
    return [[0.0] * 6 for _ in range(3)]


class MaterialCfg(_Strict):
    elasticity: ElasticityCfg = Field(default_factory=lambda: ElasticityCfg(isotropic=IsotropicCfg()))
    piezo: List[List[float]] = Field(default_factory=_zero_piezo)
    eps: float = Field(1.0, gt=0)
    mu: float = Field(1.0, gt=0)
    gainA: float = Field(1.0, gt=0)
    Q: QCfg = Field(default_factory=lambda: QCfg(identity_scale=1.0))

    @model_validator(mode="after")
    def _piezo_shape(self):
        if np.asarray(self.piezo, dtype=float).shape != (3, 6):
            raise ValueError("piezo must be a 3x6 matrix (engineering Voigt e_iJ)")
        return self


class GaussianCfg(_Strict):
    center: Optional[Vec3] = None
    width: Optional[float] = Field(None, gt=0)
    amplitude: float = 1.0
    direction: Vec3 = Field(default_factory=lambda: [1.0, 0.0, 0.0], min_length=3, max_length=3)


class PotentialCfg(_Strict):
    kind: Literal["gaussian", "affine"] = "gaussian"
    center: Optional[Vec3] = None
    width: float = Field(0.2, gt=0)
    amplitude: float = 1.0
    direction: Vec3 = Field(default_factory=lambda: [0.0, 0.0, 1.0])
    matrix: Optional[List[Vec3]] = None
    offset: Vec3 = Field(default_factory=lambda: [0.0, 0.0, 0.0])


class SolenoidalCfg(_Strict):
    magnetic: Optional[PotentialCfg] = None
    electric: Optional[PotentialCfg] = None


class ScenarioCfg(_Strict):
    name: str = "gaussian_pulse"
    gaussian: Optional[GaussianCfg] = None
    solenoidal_em: Optional[SolenoidalCfg] = None


class SteppingCfg(_Strict):
    dt: Optional[float] = Field(None, gt=0)
    t_end: float = Field(2.0, ge=0)
    solver_tol: float = Field(1e-10, gt=0, le=1e-4)
    max_iters: int = Field(2000, ge=1)
    record_every: int = Field(1, ge=1)


class AnalysisCfg(_Strict):
    fit_window: Optional[List[float]] = Field(None, min_length=2, max_length=2)
    audit_tol: float = Field(1e-8, gt=0)
    x0: Optional[Vec3] = None


class OutputCfg(_Strict):
    directory: str = "out"
    formats: List[Literal["csv", "json", "state"]] = Field(default_factory=lambda: ["csv", "json", "state"])


class TestingCfg(_Strict):
    corrupt_pair: Optional[Literal["curl", "piezo", "tq"]] = None


class ScenarioConfig(_Strict):
    grid: GridCfg
    material: MaterialCfg = Field(default_factory=MaterialCfg)
    scenario: ScenarioCfg = Field(default_factory=ScenarioCfg)
    stepping: SteppingCfg = Field(default_factory=SteppingCfg)
    analysis: AnalysisCfg = Field(default_factory=AnalysisCfg)
    output: OutputCfg = Field(default_factory=OutputCfg)
    testing: Optional[TestingCfg] = None

    @model_validator(mode="after")
    def _fill_defaults(self):
        if self.stepping.dt is None:
            self.stepping.dt = default_dt(self)
        if self.stepping.t_end < self.stepping.dt and self.stepping.t_end != 0:
            raise ValueError(f"t_end ({self.stepping.t_end}) is smaller than dt ({self.stepping.dt})")
        if self.scenario.gaussian is None and self.scenario.solenoidal_em is None:
            self.scenario.gaussian = GaussianCfg()
        g = self.scenario.gaussian
        center = [0.5 * L for L in self.grid.lengths]
        if g is not None:
            if g.center is None:
                g.center = center
            if g.width is None:
                g.width = 0.1 * min(self.grid.lengths)
        if self.scenario.solenoidal_em is not None:
            for pot in (self.scenario.solenoidal_em.magnetic, self.scenario.solenoidal_em.electric):
                if pot is not None and pot.kind == "gaussian" and pot.center is None:
                    pot.center = center
                if pot is not None and pot.kind == "affine" and pot.matrix is None:
                    raise ValueError("affine potentials need 'matrix'")
        if self.analysis.x0 is None:
            self.analysis.x0 = center
        return self

    # ---- builders -------------------------------------------------------
    def build_grid(self) -> BoxGrid:
        return BoxGrid(tuple(self.grid.lengths), tuple(self.grid.cells))

    def build_material(self) -> MaterialSet:
        return build_material(self.material)

    def build_scenario(self) -> Scenario:
        parts = []
        sc = self.scenario
        if sc.gaussian is not None:
            g = sc.gaussian
            parts.append(GaussianDisplacement(tuple(g.center), g.width, g.amplitude, tuple(g.direction)))
        if sc.solenoidal_em is not None:
            def pot(p):
                if p is None:
                    return None
                return VectorPotential(
                    kind=p.kind,
                    center=tuple(p.center) if p.center is not None else (0.0, 0.0, 0.0),
                    width=p.width,
                    amplitude=p.amplitude,
                    direction=tuple(p.direction),
                    matrix=None if p.matrix is None else tuple(map(tuple, p.matrix)),
                    offset=tuple(p.offset),
                )
            parts.append(SolenoidalEM(pot(sc.solenoidal_em.magnetic), pot(sc.solenoidal_em.electric)))
        recipe = parts[0] if len(parts) == 1 else Mixed(tuple(parts))
        return Scenario(sc.name, recipe)

    def build_stepping(self) -> TimeSteppingConfig:
        s = self.stepping
        return TimeSteppingConfig(s.dt, s.t_end, s.solver_tol, s.max_iters, s.record_every)

    def to_dict(self) -> dict:
        return self.model_dump(by_alias=True, exclude_none=True, mode="json")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def build_material(mc: MaterialCfg) -> MaterialSet:
    el = mc.elasticity
    if el.isotropic is not None:
        elasticity = ElasticityTensor.isotropic(el.isotropic.lambda_, el.isotropic.mu_shear)
    else:
        elasticity = ElasticityTensor.from_constants21(el.voigt21)
    q = mc.Q
    if q.identity_scale is not None:
        qf = ScalarQ(AlphaExpression(constant=q.identity_scale))
    elif q.scalar_alpha_expr is not None:
        qf = ScalarQ(q.scalar_alpha_expr.build())
    else:
        qf = GeneralQ(q.matrix_per_face)
    return MaterialSet(elasticity, PiezoTensor(mc.piezo), mc.eps, mc.mu, mc.gainA, qf)


def max_wave_speed(cfg: ScenarioConfig) -> float:
    """Upper bound on elastic (unit density) and electromagnetic wave speeds."""
    el = build_material(cfg.material).elasticity
    c_el = np.sqrt(max(np.linalg.eigvalsh(el.voigt)[-1], 0.0))
    c_em = 1.0 / np.sqrt(cfg.material.eps * cfg.material.mu)
    return float(max(c_el, c_em))


def default_dt(cfg: ScenarioConfig) -> float:
    h = min(L / n for L, n in zip(cfg.grid.lengths, cfg.grid.cells))
    return 0.5 * h / max_wave_speed(cfg)


def _allowed_keys(model, loc):
    """Field names (and aliases) accepted at ``loc`` in the schema."""
    cls = model
    for part in loc[:-1]:
        if isinstance(part, int) or cls is None:
            continue
        fld = cls.model_fields.get(part) or next(
            (f for f in cls.model_fields.values() if f.alias == part), None
        )
        if fld is None:
            return []
        ann = fld.annotation
        cls = _model_in(ann)
    if cls is None:
        return []
    return [f.alias or name for name, f in cls.model_fields.items()]


def _model_in(ann):
    if isinstance(ann, type) and issubclass(ann, BaseModel):
        return ann
    for arg in getattr(ann, "__args__", ()) or ():
        m = _model_in(arg)
        if m is not None:
            return m
    return None


def validate_config(data) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        messages = []
        for err in exc.errors():
            loc = tuple(err["loc"])
            where = ".".join(str(p) for p in loc) or "<root>"
            if err["type"] == "extra_forbidden":
                key = str(loc[-1])
                close = difflib.get_close_matches(key, _allowed_keys(ScenarioConfig, loc), n=1, cutoff=0.5)
                hint = f"; did you mean '{close[0]}'?" if close else ""
                messages.append(f"{where}: unknown key '{key}'{hint}")
            else:
                messages.append(f"{where}: {err['msg']}")
        raise ConfigValidationError(messages) from None


def parse_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigParseError(f"{path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return validate_config(data)
