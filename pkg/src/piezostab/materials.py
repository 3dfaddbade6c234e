"""Constitutive tensors and pointwise constitutive laws.

Symmetric 3x3 tensors are packed in the *tensor-norm* (Mandel) Voigt
convention internally::

    [g11, g22, g33, sqrt(2) g23, sqrt(2) g13, sqrt(2) g12]

so that double contractions ``a : b`` become plain dot products and the
smallest eigenvalue of the packed elasticity matrix is the ellipticity
constant.  User facing constructors accept the usual engineering Voigt
constants (``C_IJ`` and ``e_iJ``) and convert.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import NonEllipticTensor, NonPositiveCoefficient

SQRT2 = np.sqrt(2.0)

# Voigt index J -> tensor index pair (k, l)
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
MANDEL_WEIGHTS = np.array([1.0, 1.0, 1.0, SQRT2, SQRT2, SQRT2])


def sym_to_mandel(t):
    """Pack symmetric ``(..., 3, 3)`` tensors into ``(..., 6)`` Mandel vectors."""
    t = np.asarray(t, dtype=float)
    out = np.stack([t[..., i, j] for i, j in VOIGT_PAIRS], axis=-1)
    return out * MANDEL_WEIGHTS


def mandel_to_sym(v):
    """Inverse of :func:`sym_to_mandel`."""
    v = np.asarray(v, dtype=float) / MANDEL_WEIGHTS
    out = np.empty(v.shape[:-1] + (3, 3))
    for J, (i, j) in enumerate(VOIGT_PAIRS):
        out[..., i, j] = v[..., J]
        out[..., j, i] = v[..., J]
    return out


@dataclass(frozen=True)
class SymTensor3:
    """Symmetric 3x3 tensor stored by its six independent components.

    ``components`` are the plain entries ``[t11, t22, t33, t23, t13, t12]``.
    """

    components: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.components, dtype=float).reshape(6)
        object.__setattr__(self, "components", c)

    @classmethod
    def from_matrix(cls, t) -> "SymTensor3":
        t = np.asarray(t, dtype=float)
        return cls(np.array([t[i, j] for i, j in VOIGT_PAIRS]))

    @classmethod
    def from_mandel(cls, v) -> "SymTensor3":
        return cls(np.asarray(v, dtype=float) / MANDEL_WEIGHTS)

    def to_matrix(self) -> np.ndarray:
        return mandel_to_sym(self.mandel())

    def mandel(self) -> np.ndarray:
        return self.components * MANDEL_WEIGHTS

    def ddot(self, other: "SymTensor3") -> float:
        return float(self.mandel() @ other.mandel())


@dataclass(frozen=True)
class ElasticityTensor:
    """Elasticity tensor ``a_ijkl`` as a 6x6 Mandel matrix."""

    voigt: np.ndarray

    def __post_init__(self):
        m = np.array(self.voigt, dtype=float).reshape(6, 6)
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "voigt", m)

    @classmethod
    def isotropic(cls, lam: float, mu_shear: float) -> "ElasticityTensor":
        m = np.zeros((6, 6))
        m[:3, :3] = lam
        m += 2.0 * mu_shear * np.eye(6)
        return cls(m)

    @classmethod
    def from_engineering(cls, c) -> "ElasticityTensor":
        """From a 6x6 engineering Voigt matrix ``C_IJ`` (shear strains doubled)."""
        c = np.asarray(c, dtype=float).reshape(6, 6)
        return cls(c * np.outer(MANDEL_WEIGHTS, MANDEL_WEIGHTS))

    @classmethod
    def from_constants21(cls, constants: Sequence[float]) -> "ElasticityTensor":
        """From the 21 upper-triangle engineering constants ``C11, C12, ..., C66``.

        Ordering is row by row over the upper triangle.
        """
        constants = np.asarray(constants, dtype=float)
        if constants.shape != (21,):
            raise ValueError("expected 21 elastic constants")
        c = np.zeros((6, 6))
        c[np.triu_indices(6)] = constants
        c = c + np.triu(c, 1).T
        return cls.from_engineering(c)

    def full(self) -> np.ndarray:
        """The 4-index tensor ``a_ijkl``."""
        a = np.zeros((3, 3, 3, 3))
        w = MANDEL_WEIGHTS
        for I, (i, j) in enumerate(VOIGT_PAIRS):
            for J, (k, l) in enumerate(VOIGT_PAIRS):
                val = self.voigt[I, J] / (w[I] * w[J])
                for p, q in {(i, j), (j, i)}:
                    for r, s in {(k, l), (l, k)}:
                        a[p, q, r, s] = val
        return a


@dataclass(frozen=True)
class PiezoTensor:
    """Piezoelectric tensor ``e_kij`` packed as the 3x6 engineering matrix ``e_kJ``.

    Only symmetric index pairs are stored, so ``e_kij = e_kji`` holds
    structurally.
    """

    entries: np.ndarray = field(default_factory=lambda: np.zeros((3, 6)))

    def __post_init__(self):
        e = np.array(self.entries, dtype=float).reshape(3, 6)
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @classmethod
    def zero(cls) -> "PiezoTensor":
        return cls(np.zeros((3, 6)))

    def mandel(self) -> np.ndarray:
        """3x6 matrix ``m`` with ``(e gamma)_k = m[k] @ sym_to_mandel(gamma)``."""
        return self.entries * MANDEL_WEIGHTS

    def full(self) -> np.ndarray:
        e = np.zeros((3, 3, 3))
        for J, (i, j) in enumerate(VOIGT_PAIRS):
            e[:, i, j] = self.entries[:, J]
            e[:, j, i] = self.entries[:, J]
        return e

    def apply(self, strain: SymTensor3) -> np.ndarray:
        """``e gamma`` as a 3-vector."""
        return self.mandel() @ strain.mandel()

    def adjoint(self, f) -> SymTensor3:
        """``e^T F`` as a symmetric tensor."""
        return SymTensor3.from_mandel(self.mandel().T @ np.asarray(f, dtype=float))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.entries)


@dataclass(frozen=True)
class AlphaExpression:
    """Restricted scalar expression used for ``Q = alpha I``.

    ``alpha(x) = constant + gradient . x + sum_m amp_m * trig_m(k_m . x + phase_m)``
    with ``trig`` either ``sin`` or ``cos``.  Keeps ``grad alpha`` available in
    closed form.
    """

    constant: float = 1.0
    gradient: tuple = (0.0, 0.0, 0.0)
    modes: tuple = ()  # of (kind, amplitude, wavevector, phase)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self.constant + x @ np.asarray(self.gradient, dtype=float)
        for kind, amp, k, phase in self.modes:
            arg = x @ np.asarray(k, dtype=float) + phase
            out = out + amp * (np.sin(arg) if kind == "sin" else np.cos(arg))
        return np.asarray(out, dtype=float)

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = np.broadcast_to(np.asarray(self.gradient, dtype=float), x.shape).copy()
        for kind, amp, k, phase in self.modes:
            k = np.asarray(k, dtype=float)
            arg = x @ k + phase
            d = np.cos(arg) if kind == "sin" else -np.sin(arg)
            g += amp * d[..., None] * k
        return g

    def scaled(self, scale: float = 1.0, gradient_scale: float = 1.0) -> "AlphaExpression":
        """Scale the whole field by ``scale`` and its non-constant part by ``gradient_scale``."""
        s, gs = float(scale), float(gradient_scale)
        return AlphaExpression(
            constant=s * self.constant,
            gradient=tuple(s * gs * g for g in self.gradient),
            modes=tuple((kind, s * gs * a, tuple(k), p) for kind, a, k, p in self.modes),
        )


class ScalarQ:
    """``Q = alpha(x) I`` with a scalar field defined on the closed box."""

    def __init__(self, alpha: Callable | float = 1.0):
        if not callable(alpha):
            alpha = AlphaExpression(constant=float(alpha))
        self.alpha = alpha

    def face_values(self, points, face_ids=None):
        a = np.asarray(self.alpha(points), dtype=float)
        return a[..., None, None] * np.eye(3)

    @property
    def is_scalar(self) -> bool:
        return True

    @property
    def is_zero(self) -> bool:
        a = self.alpha
        return (
            isinstance(a, AlphaExpression)
            and a.constant == 0
            and not any(a.gradient)
            and not any(amp for _, amp, _, _ in a.modes)
        )

    def __repr__(self):
        return f"ScalarQ({self.alpha!r})"


class GeneralQ:
    """Arbitrary real 3x3 matrix, either constant or one per boundary face."""

    def __init__(self, matrices):
        m = np.array(matrices, dtype=float)
        if m.shape[-2:] != (3, 3) or m.ndim not in (2, 3):
            raise ValueError("Q matrices must have shape (3, 3) or (n_faces, 3, 3)")
        m.setflags(write=False)
        self.matrices = m

    def face_values(self, points, face_ids=None):
        points = np.asarray(points)
        if self.matrices.ndim == 2:
            return np.broadcast_to(self.matrices, points.shape[:-1] + (3, 3))
        m = self.matrices if face_ids is None else self.matrices[face_ids]
        return np.broadcast_to(m[:, None], points.shape[:-1] + (3, 3))

    @property
    def is_scalar(self) -> bool:
        m = self.matrices
        diag = np.diagonal(m, axis1=-2, axis2=-1)
        off = m - diag[..., None] * np.eye(3)
        if np.any(off):
            return False
        return bool(np.all(diag == diag[..., :1]))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.matrices)

    def __repr__(self):
        return f"GeneralQ(shape={self.matrices.shape})"


@dataclass(frozen=True)
class MaterialSet:
    elasticity: ElasticityTensor
    piezo: PiezoTensor = field(default_factory=PiezoTensor.zero)
    eps: float = 1.0
    mu: float = 1.0
    gain: float = 1.0
    q: ScalarQ | GeneralQ = field(default_factory=ScalarQ)

    @classmethod
    def isotropic(cls, lam=1.0, mu_shear=1.0, **kwargs) -> "MaterialSet":
        return cls(ElasticityTensor.isotropic(lam, mu_shear), **kwargs)

    @property
    def alpha(self):
        """The scalar field of ``Q = alpha I`` or ``None`` for a general ``Q``."""
        return self.q.alpha if isinstance(self.q, ScalarQ) else None


class ValidationReport(NamedTuple):
    alpha0: float
    ok: bool
    problems: tuple


def validate_material(m: MaterialSet, raise_on_error: bool = True) -> ValidationReport:
    """Check positivity of all coefficients; return the ellipticity constant.

    ``alpha0`` is the smallest eigenvalue of the Mandel elasticity matrix.
    """
    alpha0 = float(np.linalg.eigvalsh(m.elasticity.voigt)[0])
    problems = []
    if not alpha0 > 0:
        problems.append(("NonEllipticTensor", f"alpha0 = {alpha0:g} <= 0"))
    for name in ("eps", "mu", "gain"):
        val = getattr(m, name)
        if not val > 0:
            problems.append(("NonPositiveCoefficient", f"{name} = {val:g} must be positive"))
    report = ValidationReport(alpha0, not problems, tuple(problems))
    if problems and raise_on_error:
        kind, msg = problems[0]
        raise (NonEllipticTensor if kind == "NonEllipticTensor" else NonPositiveCoefficient)(msg)
    return report


def stress(m: MaterialSet, strain: SymTensor3, efield) -> SymTensor3:
    """``sigma(u, E) = a : gamma - e^T E``."""
    s = m.elasticity.voigt @ strain.mandel() - m.piezo.mandel().T @ np.asarray(efield, dtype=float)
    return SymTensor3.from_mandel(s)


def electric_displacement(m: MaterialSet, strain: SymTensor3, efield) -> np.ndarray:
    """``D = eps E + e gamma``."""
    return m.eps * np.asarray(efield, dtype=float) + m.piezo.apply(strain)


def piezo_adjoint_check(m: MaterialSet, n_samples: int = 100, seed: int = 0) -> float:
    """Largest relative defect of ``(e g) . F == g : (e^T F)`` over random pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_samples):
        g = SymTensor3(rng.standard_normal(6))
        f = rng.standard_normal(3)
        lhs = m.piezo.apply(g) @ f
        rhs = g.ddot(m.piezo.adjoint(f))
        scale = max(np.linalg.norm(m.piezo.entries) * np.linalg.norm(g.mandel()) * np.linalg.norm(f), 1.0)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst
