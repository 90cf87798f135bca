import numpy as np

from kktfem.elements import (
    BFS_DOF_H_POWER,
    DG_NODES_1D,
    bfs_basis_2d,
    dg_basis_2d,
    gauss_legendre_01,
    hermite_values,
    lagrange_values,
)


def test_quadrature_exactness_on_monomials():
    rule = gauss_legendre_01(4)
    assert abs(rule.weights.sum() - 1.0) < 1e-15
    for degree in range(rule.order + 1):
        integral = float((rule.weights * rule.points**degree).sum())
        assert abs(integral - 1.0 / (degree + 1)) < 1e-14, degree
    # degree order+1 must not be integrated exactly (sanity of the order field)
    degree = rule.order + 1
    integral = float((rule.weights * rule.points**degree).sum())
    assert abs(integral - 1.0 / (degree + 1)) > 1e-10


def test_hermite_nodal_properties():
    ends = np.array([0.0, 1.0])
    vals = hermite_values(ends)
    derivs = hermite_values(ends, deriv=1)
    # basis order: value@0, deriv@0, value@1, deriv@1
    assert np.allclose(vals, [[1, 0], [0, 0], [0, 1], [0, 0]], atol=1e-15)
    assert np.allclose(derivs, [[0, 0], [1, 0], [0, 0], [0, 1]], atol=1e-15)


def test_lagrange_nodal_property():
    vals = lagrange_values(DG_NODES_1D)
    assert np.allclose(vals, np.eye(4), atol=1e-14)


def test_bfs_dof_interpolation_property():
    # each local basis function has a unit response in exactly its own DOF
    corners = np.array([0.0, 1.0])
    xs, ys = np.meshgrid(corners, corners, indexing="xy")
    xs = xs.ravel()
    ys = ys.ravel()
    tables = {
        0: bfs_basis_2d(xs, ys),
        1: bfs_basis_2d(xs, ys, dx=1),
        2: bfs_basis_2d(xs, ys, dy=1),
        3: bfs_basis_2d(xs, ys, dx=1, dy=1),
    }
    for k in range(16):
        v, c = divmod(k, 4)
        for comp, tab in tables.items():
            expected = np.zeros(4)
            if comp == c:
                expected[v] = 1.0
            assert np.allclose(tab[k], expected, atol=1e-13), (k, comp)


def test_dg_partition_of_unity_pointwise():
    pts = np.linspace(0.0, 1.0, 7)
    vals = dg_basis_2d(pts, pts[::-1])
    assert np.allclose(vals.sum(axis=0), 1.0, atol=1e-13)


def test_h_powers_match_dof_components():
    assert list(BFS_DOF_H_POWER) == [0, 1, 1, 2] * 4
