"""Dense brute-force assembly used as an independent oracle on tiny grids.

Basis functions are products of 1-D hat functions evaluated in physical
coordinates; integrals use 3-point Gauss rules per direction, with no
reference-element machinery shared with the library.
"""
import itertools

import numpy as np

G3_PTS = np.array([-np.sqrt(3 / 5), 0.0, np.sqrt(3 / 5)])
G3_WTS = np.array([5 / 9, 8 / 9, 5 / 9])

LEVI = np.zeros((3, 3, 3))
for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    LEVI[i, j, k], LEVI[i, k, j] = 1.0, -1.0


def hat(x, xi, h):
    return np.maximum(0.0, 1.0 - abs(x - xi) / h)


def dhat(x, xi, h):
    if abs(x - xi) >= h:
        return 0.0
    return -np.sign(x - xi) / h


def basis(grid, x):
    """Values ``(N,)`` and gradients ``(N, 3)`` of every nodal hat function at ``x``."""
    h = grid.spacing
    nodes = grid.nodes
    N = len(nodes)
    val = np.empty(N)
    grad = np.empty((N, 3))
    for a in range(N):
        f = [hat(x[d], nodes[a, d], h[d]) for d in range(3)]
        df = [dhat(x[d], nodes[a, d], h[d]) for d in range(3)]
        val[a] = f[0] * f[1] * f[2]
        grad[a] = [df[0] * f[1] * f[2], f[0] * df[1] * f[2], f[0] * f[1] * df[2]]
    return val, grad


def volume_points(grid):
    h = grid.spacing
    for idx in itertools.product(*(range(n) for n in grid.cells)):
        lo = np.array(idx) * h
        for p in itertools.product(range(3), repeat=3):
            x = lo + 0.5 * h * (1 + G3_PTS[list(p)])
            w = np.prod(0.5 * h * G3_WTS[list(p)])
            yield x, w


def face_points(grid):
    """Yields ``(x, weight, normal)`` over every boundary face."""
    h = grid.spacing
    L = np.array(grid.lengths)
    for axis in range(3):
        t = [d for d in range(3) if d != axis]
        for side in (0, 1):
            nu = np.zeros(3)
            nu[axis] = 1.0 if side else -1.0
            for i0 in range(grid.cells[t[0]]):
                for i1 in range(grid.cells[t[1]]):
                    for p0, p1 in itertools.product(range(3), repeat=2):
                        x = np.zeros(3)
                        x[axis] = L[axis] * side
                        x[t[0]] = (i0 + 0.5 * (1 + G3_PTS[p0])) * h[t[0]]
                        x[t[1]] = (i1 + 0.5 * (1 + G3_PTS[p1])) * h[t[1]]
                        w = 0.25 * h[t[0]] * h[t[1]] * G3_WTS[p0] * G3_WTS[p1]
                        yield x, w, nu


def strain_mats(grad):
    """``S[a, c]`` = strain tensor of ``phi_a e_c``."""
    N = len(grad)
    S = np.zeros((N, 3, 3, 3))
    for c in range(3):
        S[:, c, c, :] += 0.5 * grad
        S[:, c, :, c] += 0.5 * grad
    return S


def assemble_dense(grid, material, q_of_x=None):
    """Dense blocks ``M0, K, curl, piezo, BG, Btau, tq`` and the three adjoint forms.

    ``q_of_x(x, nu)`` returns the 3x3 Q matrix at a boundary point.
    """
    N = grid.node_count
    n = 3 * N
    a4 = material.elasticity.full()
    e3 = material.piezo.full()
    names = ("M0", "K", "curl", "piezo", "BG", "Btau", "tq", "curl_adjoint", "piezo_adjoint", "tq_adjoint")
    out = {k: np.zeros((n, n)) for k in names}
    eye = np.eye(3)
    for x, w in volume_points(grid):
        val, grad = basis(grid, x)
        S = strain_mats(grad)                      # (N, 3, 3, 3)
        vec = val[:, None, None] * eye[None]       # (N, c, i): value of phi_a e_c
        curl = np.einsum("ijc,aj->aci", LEVI, grad)  # curl(phi_a e_c)_i
        stress = np.einsum("ijkl,bdkl->bdij", a4, S)
        out["M0"] += w * np.einsum("aci,bdi->acbd", vec, vec).reshape(n, n)
        out["K"] += w * np.einsum("acij,bdij->acbd", S, stress).reshape(n, n)
        out["curl"] += w * np.einsum("aci,bdi->acbd", curl, vec).reshape(n, n)
        egamma = np.einsum("kij,bdij->bdk", e3, S)
        out["piezo"] += w * np.einsum("aci,bdi->acbd", vec, egamma).reshape(n, n)
        # adjoint-side forms, written out on their own: int curl E . psi and int E . e gamma(w)
        out["curl_adjoint"] += w * np.einsum("aci,bdi->acbd", vec, curl).reshape(n, n)
        out["piezo_adjoint"] += w * np.einsum("aci,bdi->acbd", egamma, vec).reshape(n, n)
    for x, w, nu in face_points(grid):
        val, _ = basis(grid, x)
        vv = np.outer(val, val)
        proj = eye - np.outer(nu, nu)
        out["BG"] += w * np.einsum("ab,cd->acbd", vv, eye).reshape(n, n)
        out["Btau"] += w * np.einsum("ab,cd->acbd", vv, proj).reshape(n, n)
        if q_of_x is not None:
            Q = q_of_x(x, nu)
            # column d: Q (e_d x nu)
            qx = np.stack([Q @ np.cross(eye[d], nu) for d in range(3)], axis=1)
            out["tq"] += w * np.einsum("ab,cd->acbd", vv, qx).reshape(n, n)
            # -((Q^T v) x nu) . phi, column d is v = e_d
            qa = np.stack([-np.cross(Q.T @ eye[d], nu) for d in range(3)], axis=1)
            out["tq_adjoint"] += w * np.einsum("ab,cd->acbd", vv, qa).reshape(n, n)
    return out
