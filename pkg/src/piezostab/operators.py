"""Galerkin assembly of the semi-discrete generator.

All four fields ``(u, v, E, H)`` use trilinear nodal vector elements.
Boundary conditions enter weakly, which produces the boundary quadratic
forms ``v^T BG v`` and ``E^T Btau E`` as the only non-skew part of the
generator in the energy inner product.

Block conventions (rows are test functions)::

    curl   [phi, H]  = int H . curl(phi)
    piezo  [phi, v]  = int (e gamma(v)) . phi
    tq     [w, E]    = int_G Q (E x nu) . w

Each pair is stored once; the adjoint partner is a transposed view held in
``curl_adjoint``, ``piezo_adjoint`` and ``tq_adjoint``.  The semi-discrete
equations are::

    u' = v
    M0   v' = -(K + A BG) u - BG v + piezo_adjoint E - tq E
    Meps E' = curl H - piezo v + tq_adjoint v - Btau E
    Mmu  H' = -curl_adjoint E
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import DimensionMismatch, ResourceLimitError
from .grid import LOCAL_OFFSETS, BoxGrid
from .materials import VOIGT_PAIRS, MANDEL_WEIGHTS, MaterialSet, validate_material

DEFAULT_MAX_NODES = 400_000

_GAUSS_PTS = 0.5 + np.array([-0.5, 0.5]) / np.sqrt(3.0)
_GAUSS_WTS = np.array([0.5, 0.5])
_LEVI_CIVITA = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _LEVI_CIVITA[_i, _j, _k] = 1.0
    _LEVI_CIVITA[_i, _k, _j] = -1.0


def _hex_basis(xi):
    """Values ``(8,)`` and reference gradients ``(8, 3)`` of the trilinear basis."""
    xi = np.asarray(xi, dtype=float)
    o = LOCAL_OFFSETS
    f = np.where(o == 1, xi, 1.0 - xi)          # (8, 3)
    df = np.where(o == 1, 1.0, -1.0)            # (8, 3)
    vals = f.prod(axis=1)
    grads = np.empty((8, 3))
    for d in range(3):
        others = [e for e in range(3) if e != d]
        grads[:, d] = df[:, d] * f[:, others[0]] * f[:, others[1]]
    return vals, grads


def _cell_quadrature():
    pts, wts = [], []
    for k in range(2):
        for j in range(2):
            for i in range(2):
                pts.append([_GAUSS_PTS[i], _GAUSS_PTS[j], _GAUSS_PTS[k]])
                wts.append(_GAUSS_WTS[i] * _GAUSS_WTS[j] * _GAUSS_WTS[k])
    return np.array(pts), np.array(wts)


def _face_quadrature():
    pts, wts = [], []
    for j in range(2):
        for i in range(2):
            pts.append([_GAUSS_PTS[i], _GAUSS_PTS[j]])
            wts.append(_GAUSS_WTS[i] * _GAUSS_WTS[j])
    return np.array(pts), np.array(wts)


def _face_basis(st):
    s, t = st
    return np.array([(1 - s) * (1 - t), s * (1 - t), (1 - s) * t, s * t])


def _cross_matrix(nu):
    """Matrix ``X`` with ``X @ E == np.cross(E, nu)``, batched over nu."""
    nu = np.asarray(nu, dtype=float)
    X = np.zeros(nu.shape[:-1] + (3, 3))
    X[..., 0, 1], X[..., 0, 2] = nu[..., 2], -nu[..., 1]
    X[..., 1, 0], X[..., 1, 2] = -nu[..., 2], nu[..., 0]
    X[..., 2, 0], X[..., 2, 1] = nu[..., 1], -nu[..., 0]
    return X


class ElementOperators(NamedTuple):
    """Pointwise operators at the cell quadrature points, physical scaling."""

    weights: np.ndarray  # (8,) physical quadrature weights
    values: np.ndarray   # (8, 3, 24) vector value
    strain: np.ndarray   # (8, 6, 24) Mandel strain
    curl: np.ndarray     # (8, 3, 24)
    grad: np.ndarray     # (8, 8, 3) scalar basis gradients


def element_operators(spacing) -> ElementOperators:
    h = np.asarray(spacing, dtype=float)
    pts, wts = _cell_quadrature()
    nq = len(pts)
    values = np.zeros((nq, 3, 24))
    strain = np.zeros((nq, 6, 24))
    curl = np.zeros((nq, 3, 24))
    grads = np.zeros((nq, 8, 3))
    for q, xi in enumerate(pts):
        N, dN = _hex_basis(xi)
        dN = dN / h
        grads[q] = dN
        for a in range(8):
            for c in range(3):
                col = 3 * a + c
                values[q, c, col] = N[a]
                for J, (i, j) in enumerate(VOIGT_PAIRS):
                    g = 0.5 * ((i == c) * dN[a, j] + (j == c) * dN[a, i])
                    strain[q, J, col] = MANDEL_WEIGHTS[J] * g
                curl[q, :, col] = _LEVI_CIVITA[:, :, c] @ dN[a]
    return ElementOperators(wts * np.prod(h), values, strain, curl, grads)


def _cell_dofs(grid: BoxGrid) -> np.ndarray:
    cn = grid.cell_nodes
    return (3 * cn[:, :, None] + np.arange(3)).reshape(len(cn), 24)


def _scatter(dofs_r, dofs_c, blocks, n_rows, n_cols):
    """Sum element blocks ``(E, r, c)`` (or one shared block) into CSR."""
    n_el = len(dofs_r)
    blocks = np.broadcast_to(blocks, (n_el, dofs_r.shape[1], dofs_c.shape[1]))
    rows = np.broadcast_to(dofs_r[:, :, None], blocks.shape).ravel()
    cols = np.broadcast_to(dofs_c[:, None, :], blocks.shape).ravel()
    m = sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n_rows, n_cols))
    return m.tocsr()


@dataclass(frozen=True, eq=False)
class DiscreteSystem:
    grid: BoxGrid
    material: MaterialSet
    mass: sp.csr_matrix     # scalar nodal mass
    M0: sp.csr_matrix
    K: sp.csr_matrix
    BG: sp.csr_matrix
    Btau: sp.csr_matrix
    curl: sp.csr_matrix
    piezo: sp.csr_matrix
    tq: sp.csr_matrix
    curl_adjoint: sp.spmatrix
    piezo_adjoint: sp.spmatrix
    tq_adjoint: sp.spmatrix
    curl_curl: sp.csr_matrix    # int curl E . curl E'
    strain_gram: sp.csr_matrix  # int gamma(u) : gamma(u')
    damped: bool = True

    @property
    def n(self) -> int:
        """Dofs per field block."""
        return self.M0.shape[0]

    @property
    def size(self) -> int:
        return 4 * self.n

    @property
    def gain(self) -> float:
        return self.material.gain

    @cached_property
    def Meps(self):
        return (self.material.eps * self.M0).tocsr()

    @cached_property
    def Mmu(self):
        return (self.material.mu * self.M0).tocsr()

    @cached_property
    def G1(self):
        """Gram matrix of ``(u, u')_1``."""
        return (self.K + self.gain * self.BG).tocsr()

    @cached_property
    def _mass_lu(self):
        return splu(self.mass.tocsc())

    def mass_solve(self, y):
        """``M0^{-1} y`` for one vector-field block (or a stack of them)."""
        y = np.asarray(y, dtype=float)
        N = self.n // 3
        flat = y.reshape(-1, N, 3)
        out = np.stack([self._mass_lu.solve(np.ascontiguousarray(b)) for b in flat])
        return out.reshape(y.shape)

    def blocks(self) -> dict:
        return {
            name: getattr(self, name)
            for name in ("M0", "K", "BG", "Btau", "curl", "piezo", "tq", "curl_curl", "strain_gram")
        }

    # ---- vector-level kernels ------------------------------------------------
    def split(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.size:
            raise DimensionMismatch(f"expected {self.size} entries, got {x.shape[-1]}")
        n = self.n
        return x[..., :n], x[..., n:2 * n], x[..., 2 * n:3 * n], x[..., 3 * n:]

    def generator_rhs(self, x):
        """Mass-free generator: returns the four right-hand sides above."""
        u, v, E, H = self.split(x)
        A = self.gain
        rv = -(self.K @ u) - A * (self.BG @ u) + self.piezo_adjoint @ E - self.tq @ E
        rE = self.curl @ H - self.piezo @ v + self.tq_adjoint @ v
        if self.damped:
            rv -= self.BG @ v
            rE -= self.Btau @ E
        rH = -(self.curl_adjoint @ E)
        return v, rv, rE, rH

    def apply(self, x):
        """``U' = A_h U`` on flat vectors."""
        v, rv, rE, rH = self.generator_rhs(x)
        m = self.material
        acc = self.mass_solve(np.stack([rv, rE / m.eps, rH / m.mu]))
        return np.concatenate([v, acc[0], acc[1], acc[2]])

    def inner(self, x, y) -> float:
        """Energy inner product ``(x, y)_H``."""
        u1, v1, E1, H1 = self.split(x)
        u2, v2, E2, H2 = self.split(y)
        m = self.material
        return float(
            u1 @ (self.G1 @ u2)
            + v1 @ (self.M0 @ v2)
            + m.eps * (E1 @ (self.M0 @ E2))
            + m.mu * (H1 @ (self.M0 @ H2))
        )

    def dissipation(self, x) -> float:
        _, v, E, _ = self.split(x)
        if not self.damped:
            return 0.0
        return float(v @ (self.BG @ v) + E @ (self.Btau @ E))

    # ---- assembled block operators ------------------------------------------
    def block_mass(self) -> sp.csr_matrix:
        m = self.material
        return sp.block_diag([self.M0, self.M0, m.eps * self.M0, m.mu * self.M0]).tocsr()

    def energy_gram(self) -> sp.csr_matrix:
        m = self.material
        return sp.block_diag([self.G1, self.M0, m.eps * self.M0, m.mu * self.M0]).tocsr()

    def generator_matrix(self) -> sp.csr_matrix:
        """Mass-free generator ``At`` with ``block_mass() @ U' = At @ U``."""
        d = 1.0 if self.damped else 0.0
        return sp.bmat(
            [
                [None, self.M0, None, None],
                [-self.G1, -d * self.BG, self.piezo_adjoint - self.tq, None],
                [None, -self.piezo + self.tq_adjoint, -d * self.Btau, self.curl],
                [None, None, -self.curl_adjoint, None],
            ],
            format="csr",
        )

    def with_pairs(self, **blocks) -> "DiscreteSystem":
        """Copy with replaced blocks, e.g. a corrupted ``curl_adjoint``."""
        return dataclasses.replace(self, **blocks)


@dataclass(frozen=True)
class FieldState:
    """Nodal fields ``u``, ``v = u_t``, ``E``, ``H`` at one instant."""

    u: np.ndarray
    v: np.ndarray
    E: np.ndarray
    H: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        arrs = [np.asarray(getattr(self, k), dtype=float).ravel() for k in "uvEH"]
        if len({a.size for a in arrs}) != 1:
            raise DimensionMismatch("all four fields need the same length")
        for k, a in zip("uvEH", arrs):
            object.__setattr__(self, k, a)
        object.__setattr__(self, "time", float(self.time))

    @classmethod
    def zeros(cls, n_dofs: int, time: float = 0.0) -> "FieldState":
        z = np.zeros(n_dofs)
        return cls(z, z.copy(), z.copy(), z.copy(), time)

    @classmethod
    def from_vector(cls, x, time: float = 0.0) -> "FieldState":
        x = np.asarray(x, dtype=float)
        if x.size % 4:
            raise DimensionMismatch("state vector length must be divisible by 4")
        return cls(*np.split(x, 4), time=time)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.u, self.v, self.E, self.H])

    @property
    def n(self) -> int:
        return self.u.size


def _check(sys: DiscreteSystem, *states):
    for s in states:
        if s.n != sys.n:
            raise DimensionMismatch(f"state has {s.n} dofs per field, system expects {sys.n}")


def assemble(
    grid: BoxGrid,
    material: MaterialSet,
    *,
    conservative: bool = False,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> DiscreteSystem:
    """Assemble every block of the semi-discrete system.

    With ``conservative=True`` the damping terms ``-BG v`` and ``-Btau E``
    are dropped from the dynamics while the spring ``A BG`` stays; only
    useful to test the skew structure.
    """
    validate_material(material)
    if grid.node_count > max_nodes:
        raise ResourceLimitError(f"{grid.node_count} nodes exceeds the cap of {max_nodes}")
    N = grid.node_count
    n = 3 * N
    ops = element_operators(grid.spacing)
    w = ops.weights
    C = material.elasticity.voigt
    e = material.piezo.mandel()

    # scalar shape values at quadrature points: values[:, 0, 0::3]
    Nq = ops.values[:, 0, 0::3]
    mass_e = np.einsum("q,qa,qb->ab", w, Nq, Nq)
    K_e = np.einsum("q,qia,ij,qjb->ab", w, ops.strain, C, ops.strain)
    Kg_e = np.einsum("q,qia,qib->ab", w, ops.strain, ops.strain)
    Kc_e = np.einsum("q,qia,qib->ab", w, ops.curl, ops.curl)
    C_e = np.einsum("q,qia,qib->ab", w, ops.curl, ops.values)
    P_e = np.einsum("q,qia,ij,qjb->ab", w, ops.values, e, ops.strain)

    cn = grid.cell_nodes
    dofs = _cell_dofs(grid)
    mass = _scatter(cn, cn, mass_e, N, N)
    M0 = sp.kron(mass, sp.identity(3), format="csr")
    K = _scatter(dofs, dofs, K_e, n, n)
    strain_gram = _scatter(dofs, dofs, Kg_e, n, n)
    curl_curl = _scatter(dofs, dofs, Kc_e, n, n)
    curl = _scatter(dofs, dofs, C_e, n, n)
    piezo = _scatter(dofs, dofs, P_e, n, n)

    BG, Btau, tq = _assemble_boundary(grid, material, N)
    return DiscreteSystem(
        grid=grid,
        material=material,
        mass=mass,
        M0=M0,
        K=K,
        BG=BG,
        Btau=Btau,
        curl=curl,
        piezo=piezo,
        tq=tq,
        curl_adjoint=curl.T,
        piezo_adjoint=piezo.T,
        tq_adjoint=tq.T,
        curl_curl=curl_curl,
        strain_gram=strain_gram,
        damped=not conservative,
    )


def _assemble_boundary(grid: BoxGrid, material: MaterialSet, N: int):
    f = grid.faces
    F = len(f)
    n = 3 * N
    st, wq = _face_quadrature()
    Nf = np.array([_face_basis(p) for p in st])        # (4q, 4b)
    mf = np.einsum("q,qa,qb->ab", wq, Nf, Nf)            # reference face mass
    dofs = (3 * f.nodes[:, :, None] + np.arange(3)).reshape(F, 12)

    eye = np.eye(3)
    proj = eye - np.einsum("fi,fj->fij", f.normal, f.normal)
    bg_blocks = f.area[:, None, None] * np.kron(mf, eye)[None]
    bt_blocks = np.einsum("f,ab,fij->faibj", f.area, mf, proj).reshape(F, 12, 12)

    # physical quadrature points on each face
    corners = grid.nodes[f.nodes[:, 0]]
    h = grid.spacing
    pts = np.repeat(corners[:, None, :], len(st), axis=1)
    for q, (s, t) in enumerate(st):
        pts[np.arange(F), q, f.tangent_axes[:, 0]] += s * h[f.tangent_axes[:, 0]]
        pts[np.arange(F), q, f.tangent_axes[:, 1]] += t * h[f.tangent_axes[:, 1]]
    Qq = np.asarray(material.q.face_values(pts, np.arange(F)), dtype=float)  # (F, q, 3, 3)
    X = _cross_matrix(f.normal)                          # (F, 3, 3)
    QX = np.einsum("fqik,fkj->fqij", Qq, X)
    tq_blocks = np.einsum("f,q,qa,qb,fqij->faibj", f.area, wq, Nf, Nf, QX).reshape(F, 12, 12)

    BG = _scatter(dofs, dofs, bg_blocks, n, n)
    Btau = _scatter(dofs, dofs, bt_blocks, n, n)
    tq = _scatter(dofs, dofs, tq_blocks, n, n)
    return BG, Btau, tq


def apply_generator(sys: DiscreteSystem, s: FieldState) -> FieldState:
    """Time derivative of ``s`` under the semi-discrete dynamics."""
    _check(sys, s)
    return FieldState.from_vector(sys.apply(s.to_vector()), time=s.time)


def energy_inner_product(sys: DiscreteSystem, s1: FieldState, s2: FieldState) -> float:
    _check(sys, s1, s2)
    return sys.inner(s1.to_vector(), s2.to_vector())


class GreenResiduals(NamedTuple):
    curl: float
    piezo: float
    boundary_q: float

    @property
    def max(self) -> float:
        return max(self)


def _max_abs(m) -> float:
    m = sp.csr_matrix(m)
    m.eliminate_zeros()
    return float(abs(m).max()) if m.nnz else 0.0


def green_identity_residuals(sys: DiscreteSystem) -> GreenResiduals:
    """Largest entry of ``block - adjoint_block.T`` for each pairing."""
    return GreenResiduals(
        _max_abs(sys.curl - sys.curl_adjoint.T),
        _max_abs(sys.piezo - sys.piezo_adjoint.T),
        _max_abs(sys.tq - sys.tq_adjoint.T),
    )


def export_triplets(matrix, path) -> None:
    """Write ``row col value`` lines, values with 17 significant digits."""
    m = sp.coo_matrix(matrix)
    order = np.lexsort((m.col, m.row))
    with open(path, "w") as fh:
        fh.write(f"# shape {m.shape[0]} {m.shape[1]} nnz {m.nnz}\n")
        for r, c, v in zip(m.row[order], m.col[order], m.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")


def read_triplets(path) -> sp.csr_matrix:
    with open(path) as fh:
        header = fh.readline().split()
        shape = (int(header[2]), int(header[3]))
        data = np.loadtxt(fh, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix(shape)
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=shape)


def dense_cholesky_ok(m) -> bool:
    """Whether a (small) matrix is symmetric positive definite."""
    a = m.toarray() if sp.issparse(m) else np.asarray(m)
    if not np.allclose(a, a.T, atol=1e-14 * max(abs(a).max(), 1.0)):
        return False
    try:
        scipy.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return False
    return True
