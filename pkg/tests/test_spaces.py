import math

import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from nnheat.mesh import build_structured_mesh, unit_square_mesh
from nnheat.spaces import (
    DiscreteField,
    build_space,
    divergence_matrix,
    h1_matrix,
    inf_sup_constant,
    interpolate,
    l2_project,
    load_vector,
    norm,
)


@pytest.fixture(scope="module")
def mesh4():
    return unit_square_mesh(2)


def test_dof_counts_single_cell():
    m = build_structured_mesh(1, 1)
    assert build_space(m, "P1").dof_count == 4
    V = build_space(m, "P2_vector")
    assert V.dof_count == 2 * (4 + 5) == 18


def test_single_cell_dirichlet_dofs_are_the_boundary_nodes():
    # the midpoint of the cell diagonal is the only interior node
    V = build_space(build_structured_mesh(1, 1), "P2_vector")
    assert len(V.dirichlet_dofs) == 16
    interior = np.setdiff1d(np.arange(V.n_scalar), V.dirichlet_dofs[: len(V.dirichlet_dofs) // 2])
    np.testing.assert_allclose(V.nodes[interior], [[0.5, 0.5]])


@pytest.mark.parametrize("level", [1, 2, 3])
def test_dirichlet_dofs_are_exactly_boundary_nodes(level):
    V = build_space(unit_square_mesh(level), "P2_vector")
    on_bnd = np.isclose(V.nodes, 0).any(axis=1) | np.isclose(V.nodes, 1).any(axis=1)
    expected = np.flatnonzero(on_bnd)
    np.testing.assert_array_equal(V.dirichlet_dofs, np.concatenate([expected, expected + V.n_scalar]))
    assert V.dof_count == 2 * (V.mesh.n_vertices + V.mesh.n_edges)


def test_unknown_family():
    with pytest.raises(ValueError, match="unknown element family"):
        build_space(unit_square_mesh(1), "P3")


def test_p1_scalar_alias(mesh4):
    assert build_space(mesh4, "P1_scalar").family == "P1"


def test_interpolate_constant_and_linear(mesh4):
    Q = build_space(mesh4, "P1")
    c = interpolate(Q, lambda p: np.full(p.shape[:-1], 2.5))
    assert np.all(c.coeffs == 2.5)
    lin = interpolate(Q, lambda p: 1 + 2 * p[..., 0] - 3 * p[..., 1])
    err = lambda p: 1 + 2 * p[..., 0] - 3 * p[..., 1]
    pts = mesh4.map_points(Q.tabulate(8)[0].points)
    diff = lin.values(8) - err(pts)
    assert np.max(np.abs(diff)) < 1e-14


def test_p2_reproduces_quadratics(mesh4):
    V = build_space(mesh4, "P2_vector")
    f = lambda p: np.stack([p[..., 0] ** 2 - p[..., 0] * p[..., 1], 3 * p[..., 1] ** 2 + 1], axis=-1)
    u = interpolate(V, f)
    pts = mesh4.map_points(V.tabulate(8)[0].points)
    assert np.max(np.abs(u.values(8) - f(pts))) < 1e-13
    G = u.gradients(8)
    np.testing.assert_allclose(G[..., 0, 0], 2 * pts[..., 0] - pts[..., 1], atol=1e-12)
    np.testing.assert_allclose(G[..., 0, 1], -pts[..., 0], atol=1e-12)
    np.testing.assert_allclose(G[..., 1, 1], 6 * pts[..., 1], atol=1e-12)


def test_interpolation_error_ratio_for_sine():
    f = lambda p: np.sin(np.pi * p[..., 0]) * np.sin(np.pi * p[..., 1])
    errs = []
    for level in (2, 3, 4, 5):
        Q = build_space(unit_square_mesh(level), "P1")
        u = interpolate(Q, f)
        pts = Q.mesh.map_points(Q.tabulate(8)[0].points)
        e = u.values(8) - f(pts)
        errs.append(math.sqrt(np.einsum("tq,tq->", Q.tabulate(8)[3], e * e)))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(np.abs(ratios - 4) < 0.3)


def test_norm_of_interpolated_x():
    Q = build_space(unit_square_mesh(3), "P1")
    u = interpolate(Q, lambda p: p[..., 0])
    assert norm(u, "L2") == pytest.approx(1 / math.sqrt(3), abs=1e-12)
    assert norm(u, "H1_semi") == pytest.approx(1.0, abs=1e-12)
    assert norm(u, "Linf_nodal") == pytest.approx(1.0)
    assert norm(u, "Lp", p=4) == pytest.approx(5 ** -0.25, rel=1e-12)  # int x^4 = 1/5


@pytest.mark.parametrize("kind,p", [("L2", None), ("H1_semi", None), ("Linf_nodal", None), ("Lp", 3), ("W1p", 1.5)])
def test_norms_of_zero_field(mesh4, kind, p):
    for fam in ("P1", "P2_vector"):
        assert norm(build_space(mesh4, fam).zero(), kind, p=p) == 0.0


def test_constant_field_l2_norm(mesh4):
    Q = build_space(mesh4, "P1")
    assert norm(DiscreteField(Q, np.full(Q.dof_count, -3.0))) == pytest.approx(3.0, rel=1e-14)


def test_dsym_norm_of_rigid_rotation_is_zero(mesh4):
    V = build_space(mesh4, "P2_vector")
    u = interpolate(V, lambda p: np.stack([-p[..., 1], p[..., 0]], axis=-1))
    assert norm(u, "Dsym") < 1e-13
    assert norm(u, "H1_semi") == pytest.approx(math.sqrt(2), rel=1e-13)


def test_norm_errors(mesh4):
    Q = build_space(mesh4, "P1")
    with pytest.raises(ValueError, match="unknown norm"):
        norm(Q.zero(), "H2")
    with pytest.raises(ValueError):
        norm(Q.zero(), "Lp")
    with pytest.raises(ValueError):
        norm(Q.zero(), "Dsym")


def test_l2_project_zero_and_idempotent(mesh4):
    for fam in ("P1", "P2_vector"):
        S = build_space(mesh4, fam)
        assert np.all(l2_project(S, S.zero()).coeffs == 0)
    Q = build_space(mesh4, "P1")
    f = lambda p: np.exp(p[..., 0] + p[..., 1])
    Pf = l2_project(Q, f)
    PPf = l2_project(Q, Pf)
    np.testing.assert_allclose(PPf.coeffs, Pf.coeffs, atol=1e-12)


def test_l2_project_is_stable():
    Q = build_space(unit_square_mesh(3), "P1")
    Pf = l2_project(Q, lambda p: np.exp(p[..., 0] + p[..., 1]))
    exact = (math.e - 1) ** 2 * (math.e + 1) ** 2 / 4  # int exp(2x + 2y)
    assert norm(Pf) <= math.sqrt(exact) + 1e-10


def test_velocity_projection_vanishes_on_boundary(mesh4):
    V = build_space(mesh4, "P2_vector")
    u = l2_project(V, lambda p: np.stack([np.ones(p.shape[:-1]), p[..., 0]], axis=-1))
    assert np.all(u.coeffs[V.dirichlet_dofs] == 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_projection_of_space_member_is_identity(seed):
    V = build_space(unit_square_mesh(2), "P2_vector")
    c = np.random.default_rng(seed).standard_normal(V.dof_count)
    c[V.dirichlet_dofs] = 0
    u = DiscreteField(V, c)
    np.testing.assert_allclose(l2_project(V, u).coeffs, c, atol=1e-11)


def test_load_vector_of_one_sums_to_area(mesh4):
    Q = build_space(mesh4, "P1")
    assert load_vector(Q, lambda p: np.ones(p.shape[:-1])).sum() == pytest.approx(1.0, abs=1e-14)


def test_mass_matrix_lumped_row_sums(mesh4):
    Q = build_space(mesh4, "P1")
    M, L = Q.mass_matrix(), Q.mass_matrix(lumped=True)
    np.testing.assert_allclose(np.asarray(M.sum(axis=1)).ravel(), L.diagonal(), atol=1e-15)
    assert L.sum() == pytest.approx(1.0)


def test_discretely_divergence_free_is_orthogonal_to_temperatures():
    mesh = unit_square_mesh(2)
    V, Q = build_space(mesh, "P2_vector"), build_space(mesh, "P1")
    B = divergence_matrix(V, Q)[:, V.free_dofs].toarray()
    null = scipy.linalg.null_space(B)
    rng = np.random.default_rng(3)
    c = np.zeros(V.dof_count)
    c[V.free_dofs] = null @ rng.standard_normal(null.shape[1])
    u = DiscreteField(V, c)
    theta = DiscreteField(Q, rng.standard_normal(Q.dof_count))
    _, _, _, w = Q.tabulate()
    integral = np.einsum("tq,tq,tq->", w, theta.values(), u.divergence())
    assert abs(integral) < 1e-12 * np.linalg.norm(c) * np.linalg.norm(theta.coeffs)


def test_inf_sup_positive_on_four_by_four():
    mesh = unit_square_mesh(2)
    assert inf_sup_constant(build_space(mesh, "P2_vector"), build_space(mesh, "P1")) > 0.1


def test_inf_sup_excludes_constant_pressure():
    mesh = unit_square_mesh(2)
    V, Q = build_space(mesh, "P2_vector"), build_space(mesh, "P1")
    free = V.free_dofs
    A = h1_matrix(V)[free][:, free].toarray()
    B = divergence_matrix(V, Q)[:, free].toarray()
    S = B @ np.linalg.solve(A, B.T)
    lam = scipy.linalg.eigh(0.5 * (S + S.T), Q.mass_matrix().toarray(), eigvals_only=True)
    assert abs(lam[0]) < 1e-12
    assert inf_sup_constant(V, Q) == pytest.approx(math.sqrt(lam[1]), rel=1e-10)


def test_inf_sup_rejects_wrong_pair(mesh4):
    Q = build_space(mesh4, "P1")
    with pytest.raises(ValueError):
        inf_sup_constant(Q, Q)


def test_h1_matrix_of_linear_field(mesh4):
    V = build_space(mesh4, "P2_vector")
    u = interpolate(V, lambda p: np.stack([p[..., 0], np.zeros(p.shape[:-1])], axis=-1))
    # |u|_H1^2 + ||u||^2 = 1 + 1/3
    assert u.coeffs @ (h1_matrix(V) @ u.coeffs) == pytest.approx(4 / 3, rel=1e-13)
    assert sp.issparse(h1_matrix(V))
