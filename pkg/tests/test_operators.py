from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp
from conftest import generic_material
from oracle import assemble_dense

from piezostab.errors import DimensionMismatch, ResourceLimitError
from piezostab.grid import build_grid
from piezostab.materials import AlphaExpression, GeneralQ, MaterialSet, ScalarQ
from piezostab.operators import (
    FieldState,
    apply_generator,
    assemble,
    dense_cholesky_ok,
    energy_inner_product,
    export_triplets,
    green_identity_residuals,
    read_triplets,
)


def random_state(sys, seed=0):
    rng = np.random.default_rng(seed)
    return FieldState.from_vector(rng.standard_normal(sys.size))


def test_block_dimensions(grid2, material):
    sys = assemble(grid2, material)
    for name, block in sys.blocks().items():
        assert block.shape == (81, 81), name
    assert sys.size == 4 * 81


def test_blocks_match_brute_force_oracle(grid2, material):
    alpha = material.q.alpha
    sys = assemble(grid2, material)
    ref = assemble_dense(grid2, material, lambda x, nu: alpha(x[None])[0] * np.eye(3))
    for name in ("M0", "K", "curl", "piezo", "BG", "Btau", "tq", "curl_adjoint", "piezo_adjoint", "tq_adjoint"):
        got = getattr(sys, name).toarray()
        scale = max(abs(ref[name]).max(), 1.0)
        np.testing.assert_allclose(got, ref[name], rtol=0, atol=1e-13 * scale, err_msg=name)


def test_general_q_per_face_matches_oracle(grid2):
    rng = np.random.default_rng(3)
    faces = grid2.faces
    mats = rng.standard_normal((len(faces), 3, 3))
    material = generic_material(1, q=GeneralQ(mats))

    def q_of_x(x, nu):
        d = np.linalg.norm(faces.centroid - x, axis=1) + 10 * np.linalg.norm(faces.normal - nu, axis=1)
        return mats[np.argmin(d)]

    sys = assemble(grid2, material)
    ref = assemble_dense(grid2, material, q_of_x)
    np.testing.assert_allclose(sys.tq.toarray(), ref["tq"], atol=1e-13)


def test_zero_piezo_gives_zero_block(grid2):
    sys = assemble(grid2, MaterialSet.isotropic())
    assert sys.piezo.count_nonzero() == 0
    assert green_identity_residuals(sys).piezo == 0.0


def test_zero_q_gives_zero_block(grid2, material):
    sys = assemble(grid2, replace(material, q=ScalarQ(0.0)))
    assert sys.tq.count_nonzero() == 0
    assert green_identity_residuals(sys).boundary_q == 0.0


def test_green_residuals(grid2, material):
    r = green_identity_residuals(assemble(grid2, material))
    assert r.max <= 1e-13


def test_green_residuals_detect_corruption(grid2, material):
    sys = assemble(grid2, material)
    bad = sp.csr_matrix(sys.curl.T, copy=True)
    bad.data[0] += 1e-9
    assert green_identity_residuals(sys.with_pairs(curl_adjoint=bad)).curl == pytest.approx(1e-9, rel=1e-3)


def test_zero_state(grid2, material):
    sys = assemble(grid2, material)
    d = apply_generator(sys, FieldState.zeros(sys.n))
    assert not np.any(d.to_vector())


def test_rigid_translation_only_feels_the_spring(grid2, material):
    sys = assemble(grid2, material)
    c = np.array([0.3, -1.0, 2.0])
    u = np.tile(c, grid2.node_count)
    z = np.zeros_like(u)
    _, rv, rE, rH = sys.generator_rhs(FieldState(u, z, z, z).to_vector())
    np.testing.assert_allclose(sys.K @ u, 0, atol=1e-12)
    np.testing.assert_allclose(rv, -material.gain * (sys.BG @ u), atol=1e-12)
    assert not np.any(rE) and not np.any(rH)
    d = apply_generator(sys, FieldState(u, z, z, z))
    np.testing.assert_allclose(sys.M0 @ d.v, -material.gain * (sys.BG @ u), atol=1e-12)


def test_dissipativity_identity_against_oracle(grid2, material):
    sys = assemble(grid2, material)
    ref = assemble_dense(grid2, material, lambda x, nu: material.q.alpha(x[None])[0] * np.eye(3))
    for seed in range(5):
        s = random_state(sys, seed)
        lhs = energy_inner_product(sys, apply_generator(sys, s), s)
        rhs = -(s.v @ ref["BG"] @ s.v + s.E @ ref["Btau"] @ s.E)
        assert abs(lhs - rhs) <= 1e-12 * abs(rhs)


def test_conservative_variant_is_skew(grid2, material):
    m = replace(material, q=ScalarQ(0.0))
    sys = assemble(grid2, m, conservative=True)
    s = random_state(sys, 4)
    val = energy_inner_product(sys, apply_generator(sys, s), s)
    assert abs(val) <= 1e-12 * energy_inner_product(sys, s, s)
    # the spring stays, so the u-block is still the full (u, u)_1 form
    assert sys.G1 is not None and (sys.G1 - sys.K).count_nonzero() > 0


def test_energy_inner_product_examples(grid2, material):
    sys = assemble(grid2, material)
    z = FieldState.zeros(sys.n)
    assert energy_inner_product(sys, z, z) == 0.0
    rng = np.random.default_rng(0)
    zero = np.zeros(sys.n)
    s1 = FieldState(rng.standard_normal(sys.n), zero, zero, zero)
    s2 = FieldState(zero, rng.standard_normal(sys.n), zero, zero)
    assert energy_inner_product(sys, s1, s2) == 0.0
    s = random_state(sys)
    u, v, E, H = s.u, s.v, s.E, s.H
    m = material
    expect = u @ (sys.K + m.gain * sys.BG) @ u + v @ sys.M0 @ v + m.eps * E @ sys.M0 @ E + m.mu * H @ sys.M0 @ H
    assert energy_inner_product(sys, s, s) == pytest.approx(expect, rel=1e-13)


def test_mass_and_stiffness_definiteness(grid2, material):
    sys = assemble(grid2, material)
    for name in ("M0", "Meps", "Mmu"):
        assert dense_cholesky_ok(getattr(sys, name)), name
    for name in ("BG", "Btau", "K"):
        a = getattr(sys, name).toarray()
        np.testing.assert_allclose(a, a.T, atol=1e-14 * abs(a).max())
        assert np.linalg.eigvalsh(a)[0] >= -1e-12 * abs(a).max(), name
    assert dense_cholesky_ok(sys.G1)
    assert not dense_cholesky_ok(sys.K)  # rigid motions


def test_mass_solve(grid2, material):
    sys = assemble(grid2, material)
    y = np.random.default_rng(1).standard_normal(sys.n)
    np.testing.assert_allclose(sys.M0 @ sys.mass_solve(y), y, atol=1e-12)


def test_q_normal_shift_leaves_boundary_blocks_unchanged(grid2, material):
    faces = grid2.faces
    rho = np.random.default_rng(2).standard_normal(len(faces))
    base = np.eye(3) * 0.7 + 0.1
    shifted = base + rho[:, None, None] * np.einsum("fi,fj->fij", faces.normal, faces.normal)
    a = assemble(grid2, replace(material, q=GeneralQ(base)))
    b = assemble(grid2, replace(material, q=GeneralQ(shifted)))
    assert abs(a.tq - b.tq).max() <= 1e-13


def test_triplet_export_roundtrip(tmp_path, grid2, material):
    sys = assemble(grid2, material)
    path = tmp_path / "k.txt"
    export_triplets(sys.K, path)
    head = path.read_text().splitlines()[0]
    assert head == f"# shape 81 81 nnz {sys.K.nnz}"
    assert (read_triplets(path) != sys.K).nnz == 0


def test_resource_cap():
    with pytest.raises(ResourceLimitError):
        assemble(build_grid((1, 1, 1), (4, 4, 4)), MaterialSet.isotropic(), max_nodes=100)
    assert issubclass(ResourceLimitError, MemoryError)


def test_dimension_mismatch(grid2, material):
    sys = assemble(grid2, material)
    with pytest.raises(DimensionMismatch):
        apply_generator(sys, FieldState.zeros(3))
    with pytest.raises(DimensionMismatch):
        sys.apply(np.zeros(5))
    with pytest.raises(DimensionMismatch):
        FieldState(np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(6))


def test_assembly_is_deterministic(grid2, material):
    a = assemble(grid2, material)
    b = assemble(grid2, material)
    for name, block in a.blocks().items():
        other = b.blocks()[name]
        assert np.array_equal(block.indptr, other.indptr) and np.array_equal(block.data, other.data), name


def test_affine_alpha_is_integrated_exactly():
    g = build_grid((1, 1, 1), (2, 2, 2))
    m = MaterialSet.isotropic(q=ScalarQ(AlphaExpression(1.0, (2.0, 0.0, 0.0))))
    sys = assemble(g, m)
    ref = assemble_dense(g, m, lambda x, nu: (1 + 2 * x[0]) * np.eye(3))
    np.testing.assert_allclose(sys.tq.toarray(), ref["tq"], atol=1e-14)
