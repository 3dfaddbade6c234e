"""Discrete counterparts of the maximal dissipativity argument.

* ``solve_resolvent`` checks that ``I - A_h`` is invertible (surjective).
* ``dissipativity_check`` samples ``(A_h U, U)_H + flux(U)``.
* ``coercivity_estimate`` computes the smallest generalised Rayleigh quotient
  of the symmetric part of the ``(u, E)`` form against its natural norm.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, gmres

from .energy import dense_cap
from .errors import LinearSolveFailure, TooLargeForDense
from .materials import validate_material
from .operators import DiscreteSystem, FieldState, _check


class ResolventReport(NamedTuple):
    residual: float
    dissipativity_margin: float
    iterations: int


def solve_resolvent(sys: DiscreteSystem, rhs: FieldState, tol: float = 1e-10, max_iters: int = 5000):
    """Solve ``(I - A_h) U = F`` for ``U``; returns ``(U, report)``.

    GMRES runs on the mass-preconditioned form; the residual is measured in
    the energy norm relative to ``F``.
    """
    _check(sys, rhs)
    f = rhs.to_vector()
    n = sys.size
    op = LinearOperator((n, n), matvec=lambda x: x - sys.apply(x), dtype=float)

    def norm(x):
        return np.sqrt(max(sys.inner(x, x), 0.0))

    fnorm = norm(f)
    if fnorm == 0.0:
        z = FieldState.zeros(sys.n, rhs.time)
        return z, ResolventReport(0.0, 0.0, 0)
    iters = 0

    def count(_):
        nonlocal iters
        iters += 1

    x = np.zeros(n)
    rtol = 0.1 * tol
    for _ in range(6):
        x, _info = gmres(op, f, x0=x, rtol=rtol, atol=0.0, restart=100,
                         maxiter=max_iters // 100 + 1, callback=count, callback_type="pr_norm")
        rel = norm(f - op @ x) / fnorm
        if rel <= tol:
            break
        rtol = max(rtol * tol / rel * 0.5, 1e-15)
    else:
        raise LinearSolveFailure(f"resolvent solve stalled at relative residual {rel:.2e}")
    margin = sys.inner(x - sys.apply(x), x) - sys.inner(x, x)
    return FieldState.from_vector(x, rhs.time), ResolventReport(float(rel), float(margin), iters)


class DissipativityReport(NamedTuple):
    margin: float             # max |(A U, U) + flux(U)| / |U|^2
    min_resolvent_gap: float  # min ((I - A) U, U) - (U, U), relative
    samples: int


def dissipativity_check(sys: DiscreteSystem, samples: int = 100, seed: int = 0) -> DissipativityReport:
    """Sample random states; report the identity defect and resolvent gap."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    worst, gap = 0.0, np.inf
    for _ in range(samples):
        x = rng.standard_normal(sys.size)
        ax = sys.apply(x)
        nrm2 = sys.inner(x, x)
        dev = abs(sys.inner(ax, x) + sys.dissipation(x)) / nrm2
        worst = max(worst, dev)
        gap = min(gap, (sys.inner(x - ax, x) - nrm2) / nrm2)
    return DissipativityReport(worst, float(gap), samples)


class CoercivityReport(NamedTuple):
    c_min: float
    lower_bound: float
    skew_residual: float  # symmetric part of the (u, E) coupling blocks


def coupled_form(sys: DiscreteSystem):
    """The ``(u, E)`` bilinear form of the resolvent problem and its norm Gram matrix.

    Form blocks: ``K + M0 + (A+1) BG`` (u), ``curl_curl / mu + eps M0 + Btau`` (E)
    and the coupling ``tq - piezo_adjoint`` / ``piezo - tq_adjoint``.  The
    norm uses ``strain_gram + M0 + BG`` for ``u`` (equivalent to the H1 norm by
    Korn's inequality) and ``curl_curl + M0 + Btau`` for ``E``.
    """
    m = sys.material
    a_uu = sys.K + sys.M0 + (m.gain + 1.0) * sys.BG
    a_ee = sys.curl_curl / m.mu + m.eps * sys.M0 + sys.Btau
    a_ue = sys.tq - sys.piezo_adjoint
    a_eu = sys.piezo - sys.tq_adjoint
    form = sp.bmat([[a_uu, a_ue], [a_eu, a_ee]], format="csr")
    gram = sp.block_diag([sys.strain_gram + sys.M0 + sys.BG, sys.curl_curl + sys.M0 + sys.Btau], format="csr")
    return form, gram


def coercivity_estimate(sys: DiscreteSystem, cap: int | None = None) -> CoercivityReport:
    cap = dense_cap() if cap is None else cap
    if 2 * sys.n > cap:
        raise TooLargeForDense(f"{2 * sys.n} dofs exceed the dense cap of {cap}")
    form, gram = coupled_form(sys)
    a = form.toarray()
    sym = 0.5 * (a + a.T)
    n = sys.n
    skew = float(np.abs(sym[:n, n:]).max()) if n else 0.0
    c_min = float(scipy.linalg.eigh(sym, gram.toarray(), eigvals_only=True, subset_by_index=[0, 0])[0])
    m = sys.material
    alpha0 = validate_material(m).alpha0
    bound = min(1.0, alpha0, m.eps, 1.0 / m.mu)
    return CoercivityReport(c_min, bound, skew)
