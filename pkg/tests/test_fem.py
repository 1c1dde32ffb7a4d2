from itertools import product
from math import comb, factorial

import numpy as np
import pytest

from phifem.fem import (
    MAX_DEGREE,
    facet_points_in_cell,
    facet_quadrature,
    lagrange_basis,
    lagrange_dofmap,
    quadrature,
    reference_vertices,
)
from phifem.mesh import build_background_mesh, BoundingBox


def random_ref_points(dim, n, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.dirichlet(np.ones(dim + 1), size=n)
    return x[:, 1:]


def monomial_integral(exps):
    # int over the reference simplex of prod x_i^a_i = prod a_i! / (dim + sum a)!
    num = np.prod([factorial(a) for a in exps])
    return num / factorial(len(exps) + sum(exps))


SUPPORTED = [(d, k) for d in (2, 3) for k in range(1, MAX_DEGREE[d] + 1)]


@pytest.mark.parametrize("dim,degree", SUPPORTED)
def test_basis_size_and_nodal_property(dim, degree):
    b = lagrange_basis(dim, degree)
    assert len(b) == comb(degree + dim, dim)
    np.testing.assert_allclose(b.values(b.nodes), np.eye(len(b)), atol=1e-12)


@pytest.mark.parametrize("dim,degree", SUPPORTED)
def test_partition_of_unity_and_gradient_sum(dim, degree):
    b = lagrange_basis(dim, degree)
    x = random_ref_points(dim, 100, seed=degree)
    np.testing.assert_allclose(b.values(x).sum(axis=1), 1.0, atol=1e-13)
    np.testing.assert_allclose(b.gradients(x).sum(axis=1), 0.0, atol=1e-11)


@pytest.mark.parametrize("dim,degree", SUPPORTED)
def test_basis_reproduces_monomials(dim, degree):
    b = lagrange_basis(dim, degree)
    x = random_ref_points(dim, 50, seed=7)
    for exps in product(range(degree + 1), repeat=dim):
        if sum(exps) > degree:
            continue
        mono = lambda p: np.prod(p ** np.array(exps), axis=-1)
        np.testing.assert_allclose(b.values(x) @ mono(b.nodes), mono(x), atol=1e-12)


def test_p1_barycenter_values():
    b = lagrange_basis(2, 1)
    np.testing.assert_allclose(b.values(np.array([[1 / 3, 1 / 3]])), [[1 / 3] * 3], atol=1e-15)


def test_p2_vertex_function_vanishes_at_opposite_midpoint():
    b = lagrange_basis(2, 2)
    # vertex (0, 0) is opposite the edge (1,0)-(0,1)
    i = int(np.flatnonzero(np.all(np.isclose(b.nodes, 0.0), axis=1))[0])
    assert abs(b.values(np.array([[0.5, 0.5]]))[0, i]) < 1e-14


def test_p3_reproduces_random_cubic():
    rng = np.random.default_rng(3)
    c = rng.standard_normal(10)
    exps = [(i, j) for i in range(4) for j in range(4) if i + j <= 3]
    poly = lambda p: sum(ci * p[..., 0] ** i * p[..., 1] ** j for ci, (i, j) in zip(c, exps))
    b = lagrange_basis(2, 3)
    x = random_ref_points(2, 1, seed=11)
    assert abs((b.values(x) @ poly(b.nodes))[0] - poly(x)[0]) < 1e-12


def test_gradients_match_finite_differences():
    b = lagrange_basis(2, 3)
    x = np.array([[0.2, 0.3]])
    eps = 1e-6
    fd = np.stack([(b.values(x + eps * e) - b.values(x - eps * e))[0] / (2 * eps) for e in np.eye(2)], axis=-1)
    np.testing.assert_allclose(b.gradients(x)[0], fd, atol=1e-7)


@pytest.mark.parametrize("dim,degree", [(2, 5), (3, 4), (2, -1), (4, 1)])
def test_unsupported_basis_degree(dim, degree):
    with pytest.raises(ValueError):
        lagrange_basis(dim, degree)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_quadrature_weights_sum_to_measure(dim):
    for deg in (0, 4, 10):
        assert abs(quadrature(dim, deg).weights.sum() - 1 / factorial(dim)) < 1e-14


@pytest.mark.parametrize("dim,max_deg", [(2, 14), (3, 10)])
def test_quadrature_exact_on_monomials(dim, max_deg):
    for deg in range(max_deg + 1):
        rule = quadrature(dim, deg)
        for exps in product(range(deg + 1), repeat=dim):
            if sum(exps) > deg:
                continue
            approx = rule.integrate(lambda p: np.prod(p ** np.array(exps), axis=-1))
            assert abs(approx - monomial_integral(exps)) < 1e-13, (deg, exps)


def test_quadrature_reference_values():
    assert abs(quadrature(2, 0).integrate(lambda p: np.ones(len(p))) - 0.5) < 1e-15
    assert abs(quadrature(2, 2).integrate(lambda p: p[:, 0] ** 2) - 1 / 12) < 1e-15
    assert abs(quadrature(3, 0).integrate(lambda p: np.ones(len(p))) - 1 / 6) < 1e-15


def test_quadrature_rejects_bad_degree():
    with pytest.raises(ValueError):
        quadrature(2, 99)
    with pytest.raises(ValueError):
        quadrature(4, 2)


def test_facet_rule_edge_length():
    mesh = build_background_mesh(BoundingBox((0, 0), (2, 1)), 3)
    rule = facet_quadrature(2, 2)
    for f in range(mesh.num_facets):
        assert abs(rule.weights.sum() * mesh.facet_areas[f] - mesh.facet_areas[f]) < 1e-14


def test_facet_rule_integrates_x_on_diagonal_edge():
    # edge from (1,0) to (0,1) of the reference triangle; length sqrt(2), int x ds = sqrt(2)/2
    rule = facet_quadrature(2, 3)
    pts = facet_points_in_cell(rule, np.array([[1, 2]]))[0]
    val = np.sqrt(2) * np.dot(rule.weights, pts[:, 0])
    assert abs(val - np.sqrt(2) / 2) < 1e-14


@pytest.mark.parametrize("dim", [2, 3])
def test_facet_embedding_owner_neighbor_agree(dim):
    mesh = build_background_mesh(BoundingBox.cube(-1, 1, dim), 3)
    rule = facet_quadrature(dim, 4)
    f = mesh.interior_facets
    owner, nbr = mesh.facet_cells[f, 0], mesh.facet_cells[f, 1]
    xo = np.einsum("fqk,fjk->fqj", facet_points_in_cell(rule, mesh.facet_local_vertices(f, owner)),
                   mesh.jacobians[owner]) + mesh.vertices[mesh.cells[owner, 0]][:, None]
    xn = np.einsum("fqk,fjk->fqj", facet_points_in_cell(rule, mesh.facet_local_vertices(f, nbr)),
                   mesh.jacobians[nbr]) + mesh.vertices[mesh.cells[nbr, 0]][:, None]
    assert np.abs(xo - xn).max() < 1e-13


def test_dofmap_counts_and_sharing():
    cells = np.array([[0, 1, 2], [1, 3, 2]])
    dofs, n, _ = lagrange_dofmap(cells, 2)
    assert n == 9  # 4 vertices + 5 edges
    shared = set(dofs[0]) & set(dofs[1])
    assert len(shared) == 3  # two vertices and one edge midpoint


def test_dofmap_coordinates_are_nodes():
    verts = reference_vertices(2) * 2.0
    dofs, n, coords = lagrange_dofmap(np.array([[0, 1, 2]]), 3, verts)
    np.testing.assert_allclose(coords[dofs[0]], 2.0 * lagrange_basis(2, 3).nodes, atol=1e-15)
