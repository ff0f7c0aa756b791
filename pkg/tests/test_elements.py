import numpy as np
import pytest
import sympy

from fddlm.assembly import assemble_mass, assemble_stiffness
from fddlm.elements import (ElementKind, cell_values, enumerate_dofs, gauss_rule,
                            shape_gradient, shape_gradients, shape_value,
                            shape_values)
from fddlm.mesh import build_disk_hierarchy, build_square_hierarchy


def _symbolic_q1():
    x, y = sympy.symbols("x y")
    phis = [(1 - x) * (1 - y), x * (1 - y), x * y, (1 - x) * y]
    return x, y, phis


def test_q1_stiffness_matches_symbolic_integration():
    x, y, phis = _symbolic_q1()
    K = sympy.zeros(4, 4)
    for a in range(4):
        for b in range(4):
            integrand = (sympy.diff(phis[a], x) * sympy.diff(phis[b], x)
                         + sympy.diff(phis[a], y) * sympy.diff(phis[b], y))
            K[a, b] = sympy.integrate(integrand, (x, 0, 1), (y, 0, 1))
    expected = np.array(K.tolist(), dtype=float)
    assert expected[0, 0] == pytest.approx(2 / 3)
    assert expected[0, 1] == pytest.approx(-1 / 6)
    assert expected[0, 2] == pytest.approx(-1 / 3)

    # one cell of side h: the Q1 stiffness is scale invariant in 2D
    h = build_square_hierarchy(0.5, 1)
    space = enumerate_dofs(h, 1, ElementKind.Q1)
    K_num = assemble_stiffness(space, 1.0).toarray()
    local = space.dof_map[0]
    np.testing.assert_allclose(K_num[np.ix_(local, local)], expected, atol=1e-14)


def test_q1_mass_matches_symbolic_integration():
    x, y, phis = _symbolic_q1()
    M = np.array([[float(sympy.integrate(pa * pb, (x, 0, 1), (y, 0, 1)))
                   for pb in phis] for pa in phis])
    h = build_square_hierarchy(0.5, 1)
    space = enumerate_dofs(h, 1, ElementKind.Q1)
    local = space.dof_map[0]
    M_num = assemble_mass(space, space).toarray()[np.ix_(local, local)]
    np.testing.assert_allclose(M_num, M, atol=1e-15)


@pytest.mark.parametrize("order", [1, 2, 3, 4, 5])
def test_gauss_rule_exact_to_degree(order):
    rule = gauss_rule(order)
    deg = 2 * order - 1
    xi, eta = rule.points.T
    for p in range(deg + 1):
        for q in range(deg + 1):
            exact = 1.0 / ((p + 1) * (q + 1))
            assert rule.weights @ (xi ** p * eta ** q) == pytest.approx(exact, abs=1e-14)


def test_gauss_cubic_product():
    rule = gauss_rule(2)
    xi, eta = rule.points.T
    assert rule.weights @ (xi ** 3 * eta ** 3) == pytest.approx(1 / 16, abs=1e-15)


def test_gauss_rule_rejects_unknown_order():
    with pytest.raises(ValueError):
        gauss_rule(0)
    with pytest.raises(ValueError):
        gauss_rule(6)


def test_bubble_integral_and_boundary_values():
    rule = gauss_rule(3)
    b = shape_values(ElementKind.Q1PlusBubble, rule.points)[:, 4]
    assert rule.weights @ b == pytest.approx(4 / 9, abs=1e-15)
    assert shape_value(ElementKind.Q1PlusBubble, 4, [0.5, 0.5]) == pytest.approx(1.0)
    t = np.linspace(0, 1, 7)
    edges = np.concatenate([np.column_stack([t, 0 * t]), np.column_stack([t, 1 + 0 * t]),
                            np.column_stack([0 * t, t]), np.column_stack([1 + 0 * t, t])])
    np.testing.assert_allclose(shape_values(ElementKind.Q1PlusBubble, edges)[:, 4], 0.0)


def test_q1_partition_of_unity_and_nodal_property():
    pts = np.random.default_rng(0).random((50, 2))
    np.testing.assert_allclose(shape_values(ElementKind.Q1, pts).sum(axis=1), 1.0)
    np.testing.assert_allclose(shape_gradients(ElementKind.Q1, pts).sum(axis=1), 0.0,
                               atol=1e-14)
    corners = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    np.testing.assert_allclose(shape_values(ElementKind.Q1, corners), np.eye(4))


def test_p0_is_constant():
    pts = np.random.default_rng(1).random((5, 2))
    np.testing.assert_allclose(shape_values(ElementKind.P0, pts), 1.0)
    np.testing.assert_allclose(shape_gradients(ElementKind.P0, pts), 0.0)


@pytest.mark.parametrize("element", [ElementKind.Q1, ElementKind.Q1PlusBubble])
def test_gradients_match_finite_differences(element):
    rng = np.random.default_rng(2)
    eps = 1e-6
    for p in rng.random((10, 2)) * 0.8 + 0.1:
        for a in range(element.n_local):
            g = shape_gradient(element, a, p)
            fd = [(shape_value(element, a, p + eps * e) - shape_value(element, a, p - eps * e))
                  / (2 * eps) for e in np.eye(2)]
            np.testing.assert_allclose(g, fd, atol=1e-8)


def test_invalid_local_dof():
    with pytest.raises(ValueError):
        shape_value(ElementKind.Q1, 4, [0.5, 0.5])
    with pytest.raises(ValueError):
        shape_gradient(ElementKind.P0, 1, [0.5, 0.5])


def test_physical_gradients_on_curved_cells():
    # grad of the interpolant of a linear function is exact on bilinear cells
    disk = build_disk_hierarchy(1.0, 2)
    level = disk.level(2)
    cv = cell_values(level, ElementKind.Q1, gauss_rule(2))
    u = 3.0 * level.vertices[:, 0] - 2.0 * level.vertices[:, 1]
    g = np.einsum("cqad,ca->cqd", cv.grads, u[level.cells])
    np.testing.assert_allclose(g[..., 0], 3.0, atol=1e-12)
    np.testing.assert_allclose(g[..., 1], -2.0, atol=1e-12)


def test_dof_numbering():
    h = build_disk_hierarchy(1.0, 2)
    level = h.level(2)
    q1 = enumerate_dofs(h, 2, ElementKind.Q1)
    qb = enumerate_dofs(h, 2, ElementKind.Q1PlusBubble)
    p0 = enumerate_dofs(h, 2, ElementKind.P0)
    assert q1.n_dofs == level.n_vertices
    assert qb.n_dofs == level.n_vertices + level.n_cells
    assert p0.n_dofs == level.n_cells
    np.testing.assert_array_equal(qb.dof_map[:, 4], level.n_vertices + np.arange(level.n_cells))
    assert q1.boundary_dofs.size == 0
