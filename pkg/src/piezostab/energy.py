"""Energy bookkeeping, balance audit, decay fit and spectral cross-check."""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import EmptyTrace, InsufficientData, NonPositiveEnergy, TooLargeForDense
from .operators import DiscreteSystem, FieldState, _check

DEFAULT_DENSE_CAP = 2000
TRACE_COLUMNS = ("t", "energy", "flux", "cumulative_dissipated", "divD_res", "divMuH_res")


def dense_cap() -> int:
    return int(os.environ.get("PIEZO_DENSE_CAP", DEFAULT_DENSE_CAP))


def energy(sys: DiscreteSystem, s: FieldState) -> float:
    """Discrete total energy, kinetic + elastic + spring + electromagnetic."""
    _check(sys, s)
    m = sys.material
    val = 0.5 * (
        s.v @ (sys.M0 @ s.v)
        + s.u @ (sys.K @ s.u)
        + m.gain * (s.u @ (sys.BG @ s.u))
        + m.eps * (s.E @ (sys.M0 @ s.E))
        + m.mu * (s.H @ (sys.M0 @ s.H))
    )
    return float(val)


def boundary_dissipation(sys: DiscreteSystem, s: FieldState) -> float:
    """Instantaneous boundary flux ``int_G |v|^2 + |E x nu|^2``."""
    _check(sys, s)
    return sys.dissipation(s.to_vector())


@dataclass
class EnergyTrace:
    times: np.ndarray
    energy: np.ndarray
    flux: np.ndarray
    cumulative_dissipated: np.ndarray
    divD_res: np.ndarray = None
    divMuH_res: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        n = len(self.times)
        for name in ("energy", "flux", "cumulative_dissipated", "divD_res", "divMuH_res"):
            val = getattr(self, name)
            val = np.full(n, np.nan) if val is None else np.asarray(val, dtype=float)
            if val.shape != (n,):
                raise ValueError(f"{name} has shape {val.shape}, expected ({n},)")
            setattr(self, name, val)
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trace times must be strictly increasing")

    @classmethod
    def from_samples(cls, times, energy, flux, **kwargs) -> "EnergyTrace":
        """Build a trace, integrating ``flux`` with the trapezoidal rule."""
        times = np.asarray(times, dtype=float)
        flux = np.asarray(flux, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (flux[1:] + flux[:-1]) * np.diff(times))])
        return cls(times, energy, flux, cum, **kwargs)

    def __len__(self):
        return len(self.times)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        cols = (self.times, self.energy, self.flux, self.cumulative_dissipated, self.divD_res, self.divMuH_res)
        for row in zip(*cols):
            w.writerow([repr(float(x)) for x in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "EnergyTrace":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or tuple(rows[0]) != TRACE_COLUMNS:
            raise ValueError(f"{path}: unexpected trace header")
        data = np.array(rows[1:], dtype=float).reshape(-1, len(TRACE_COLUMNS))
        return cls(*data.T)


class AuditReport(NamedTuple):
    residual: float
    tolerance: float
    passed: bool


def audit_balance(trace: EnergyTrace, tol: float = 1e-8) -> AuditReport:
    """Worst mismatch of ``E(S) - E(T)`` against the dissipated energy in between.

    Taken over all pairs of recorded instants, relative to ``E(0)``.
    """
    if len(trace) == 0:
        raise EmptyTrace("cannot audit an empty trace")
    # E(S) - E(T) - (cum(T) - cum(S)) = d(S) - d(T)
    d = trace.energy + trace.cumulative_dissipated
    spread = float(d.max() - d.min())
    e0 = float(trace.energy[0])
    residual = spread / e0 if e0 > 0 else spread
    return AuditReport(residual, tol, residual <= tol)


@dataclass(frozen=True)
class DecayFit:
    M: float
    omega: float
    fit_window: tuple
    r_squared: float
    n_samples: int

    @property
    def r_squared_defined(self) -> bool:
        return bool(np.isfinite(self.r_squared))

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "omega": self.omega,
            "fit_window": list(self.fit_window),
            "r_squared": self.r_squared if self.r_squared_defined else None,
            "n_samples": self.n_samples,
        }


def fit_decay(trace: EnergyTrace, window=None, min_samples: int = 10) -> DecayFit:
    """Least-squares fit of ``log E(t) = log(M E(0)) - omega t``.

    ``window`` defaults to the second half of the run.  ``r_squared`` is NaN
    when the energy is constant over the window.
    """
    if len(trace) == 0:
        raise EmptyTrace("cannot fit an empty trace")
    t, e = trace.times, trace.energy
    if window is None:
        window = (0.5 * (t[0] + t[-1]), t[-1])
    lo, hi = float(window[0]), float(window[1])
    sel = (t >= lo) & (t <= hi)
    if np.any(e[sel] <= 0):
        raise NonPositiveEnergy(f"non-positive energy inside the fit window [{lo}, {hi}]")
    if sel.sum() < min_samples:
        raise InsufficientData(f"{sel.sum()} samples in [{lo}, {hi}], need {min_samples}")
    ts, y = t[sel], np.log(e[sel])
    A = np.stack([np.ones_like(ts), ts], axis=1)
    (intercept, slope), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([intercept, slope])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    # constant traces: relative spread at rounding level gives an undefined r^2
    if ss_tot <= (1e-13 * max(abs(y).max(), 1.0)) ** 2 * len(y):
        r2 = float("nan")
        slope = 0.0
        intercept = float(y.mean())
    else:
        r2 = 1.0 - float(resid @ resid) / ss_tot
    return DecayFit(
        M=float(np.exp(intercept) / e[0]),
        omega=float(-slope),
        fit_window=(lo, hi),
        r_squared=r2,
        n_samples=int(sel.sum()),
    )


class ObservabilityReport(NamedTuple):
    T_energy_T: float
    energy_0: float
    integrated_flux: float
    ratio: float

    def to_dict(self):
        return self._asdict()


def observability_report(trace: EnergyTrace) -> ObservabilityReport:
    """Empirical terms of the observability inequality; no verdict attached."""
    if len(trace) == 0:
        raise EmptyTrace("cannot report on an empty trace")
    T = float(trace.times[-1] - trace.times[0])
    lhs = T * float(trace.energy[-1])
    e0 = float(trace.energy[0])
    flux = float(trace.cumulative_dissipated[-1] - trace.cumulative_dissipated[0])
    denom = e0 + flux
    return ObservabilityReport(lhs, e0, flux, lhs / denom if denom > 0 else 0.0)


class SpectrumReport(NamedTuple):
    abscissa: float
    eigen_count: int
    kernel_dim: int
    max_real_overall: float


def generator_eigenvalues(sys: DiscreteSystem, cap: int | None = None) -> np.ndarray:
    cap = dense_cap() if cap is None else cap
    if sys.size > cap:
        raise TooLargeForDense(f"{sys.size} dofs exceed the dense cap of {cap}")
    At = sys.generator_matrix().toarray()
    M = sys.block_mass().toarray()
    return scipy.linalg.eig(At, M, right=False)


def spectral_abscissa(sys: DiscreteSystem, cap: int | None = None, kernel_tol: float = 1e-9) -> SpectrumReport:
    """Largest real part of the generator spectrum off its stationary kernel.

    Eigenvalues with ``|lambda| <= kernel_tol * max|lambda|`` belong to the
    stationary discrete-gradient modes (excluded by the divergence
    constraints) and are counted in ``kernel_dim`` instead.
    """
    ev = generator_eigenvalues(sys, cap)
    scale = float(np.abs(ev).max()) if ev.size else 0.0
    zero = np.abs(ev) <= kernel_tol * scale
    rest = ev[~zero]
    abscissa = float(rest.real.max()) if rest.size else 0.0
    return SpectrumReport(abscissa, int(ev.size), int(zero.sum()), float(ev.real.max()))


def dumps(obj) -> str:
    """Deterministic JSON for reports."""
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def _plain(obj):
    if hasattr(obj, "to_dict"):
        return _plain(obj.to_dict())
    if hasattr(obj, "_asdict"):
        return _plain(obj._asdict())
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else None
    return obj
