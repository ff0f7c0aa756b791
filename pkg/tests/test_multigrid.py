import numpy as np
import pytest
import scipy.sparse as sp

from fddlm.assembly import CouplingMode, ElementChoice, ProblemConfig, assemble_system
from fddlm.elements import ElementKind, enumerate_dofs, on_mesh_boundary
from fddlm.linalg import csr
from fddlm.mesh import build_disk_hierarchy, build_square_hierarchy
from fddlm.multigrid import (MgHierarchy, SingularPatchError, SmootherInapplicableError,
                             SORSmoother, VankaSmoother, build_mixed_transfer,
                             build_q1_transfer, build_vanka_patches, mask_transfer,
                             prolongation, sor_sweep, vanka_sweep)
from fddlm.precond import a1_levels, b_levels, MgConfig
from fddlm import multigrid as mg


def _spaces(h, k, element):
    return enumerate_dofs(h, k, element), enumerate_dofs(h, k + 1, element)


def test_q1_prolongation_reproduces_bilinear_functions_on_square():
    h = build_square_hierarchy(1.4, 4)
    c, f = _spaces(h, 3, ElementKind.Q1)
    P = build_q1_transfer(c, f).prolongation
    for fn in (lambda x, y: 1 + 0 * x, lambda x, y: 2 * x - y, lambda x, y: x * y):
        np.testing.assert_allclose(P @ fn(*c.level.vertices.T), fn(*f.level.vertices.T),
                                   atol=1e-14)


def test_q1_prolongation_on_disk_interior():
    h = build_disk_hierarchy(1.0, 3)
    c, f = _spaces(h, 2, ElementKind.Q1)
    P = prolongation(c, f)
    np.testing.assert_allclose(P @ np.ones(c.n_dofs), 1.0, atol=1e-14)
    interior = ~f.level.boundary_vertex_flags
    x = c.level.vertices[:, 0] - 3 * c.level.vertices[:, 1]
    xf = f.level.vertices[:, 0] - 3 * f.level.vertices[:, 1]
    np.testing.assert_allclose((P @ x)[interior], xf[interior], atol=1e-14)
    # coarse vertices keep their values
    np.testing.assert_allclose((P @ x)[:c.n_dofs], x, atol=1e-14)


def test_bubble_prolongation():
    h = build_disk_hierarchy(1.0, 2)
    c, f = _spaces(h, 1, ElementKind.Q1PlusBubble)
    P = prolongation(c, f)
    nvc, nvf = c.level.n_vertices, f.level.n_vertices
    e = np.zeros(c.n_dofs)
    e[nvc] = 1.0                          # bubble of coarse cell 0
    fine = P @ e
    children = np.flatnonzero(f.level.parent_cell_map == 0)
    np.testing.assert_allclose(fine[nvf + children], 0.3125)
    # the coarse bubble is 1 at the parent centre, 0 on the parent boundary
    centre = f.level.cells[children[0], 2]
    assert fine[centre] == pytest.approx(1.0)
    on_edges = np.unique(f.level.cells[children].ravel())
    np.testing.assert_allclose(fine[np.setdiff1d(on_edges, [centre])], 0.0, atol=1e-15)
    # bubble functions of other coarse cells do not leak into these children
    assert np.count_nonzero(fine[nvf:]) == 4


def test_p0_prolongation_copies_parent_value():
    h = build_disk_hierarchy(1.0, 3)
    c, f = _spaces(h, 2, ElementKind.P0)
    P = prolongation(c, f)
    v = np.arange(c.n_dofs, dtype=float)
    np.testing.assert_array_equal(P @ v, v[f.level.parent_cell_map])


def test_mixed_transfer_is_block_diagonal():
    h = build_disk_hierarchy(1.0, 3)
    cv, fv = _spaces(h, 2, ElementKind.Q1PlusBubble)
    cl, fl = _spaces(h, 2, ElementKind.P0)
    T = build_mixed_transfer((cv, cl), (fv, fl))
    P = T.prolongation
    assert P.shape == (fv.n_dofs + fl.n_dofs, cv.n_dofs + cl.n_dofs)
    assert abs(P[:fv.n_dofs, cv.n_dofs:]).max() == 0
    assert abs(P[fv.n_dofs:, :cv.n_dofs]).max() == 0
    np.testing.assert_allclose(T.restriction.toarray(), P.T.toarray())


def test_mask_transfer_drops_constrained_dofs():
    h = build_square_hierarchy(1.0, 3)
    c = enumerate_dofs(h, 2, ElementKind.Q1, on_mesh_boundary)
    f = enumerate_dofs(h, 3, ElementKind.Q1, on_mesh_boundary)
    T = mask_transfer(build_q1_transfer(c, f), f.boundary_dofs, c.boundary_dofs)
    P = T.prolongation.toarray()
    assert np.all(P[f.boundary_dofs] == 0)
    assert np.all(P[:, c.boundary_dofs] == 0)


def test_transfer_rejects_non_nested_levels():
    h = build_square_hierarchy(1.0, 3)
    c = enumerate_dofs(h, 1, ElementKind.Q1)
    f = enumerate_dofs(h, 3, ElementKind.Q1)
    with pytest.raises(ValueError):
        prolongation(c, f)


def test_sor_needs_nonzero_diagonal():
    A = csr(np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(SmootherInapplicableError):
        sor_sweep(A, np.zeros(2), np.ones(2))
    with pytest.raises(SmootherInapplicableError):
        SORSmoother(A)
    with pytest.raises(ValueError):
        sor_sweep(csr(np.eye(2)), np.zeros(2), np.ones(2), direction="sideways")


def test_sor_sweeps_converge_on_spd_matrix():
    n = 30
    A = csr(sp.diags([-np.ones(n - 1), 2.5 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]))
    b = np.ones(n)
    x = np.zeros(n)
    for _ in range(60):
        sor_sweep(A, x, b, omega=1.2, direction="forward")
        sor_sweep(A, x, b, omega=1.2, direction="backward")
    assert np.linalg.norm(A @ x - b) < 1e-10


@pytest.mark.parametrize("ec,size", [(ElementChoice.Element1, 10),
                                     (ElementChoice.Element2, 6)])
def test_vanka_patch_sizes(ec, size):
    S = assemble_system(ProblemConfig(element_choice=ec), 4, 4)
    patches = build_vanka_patches(S.B(), S.sizes[1])
    sizes = np.diff(patches.ptr)
    assert patches.n_patches == S.sizes[2]
    assert sizes.max() == size
    if ec is ElementChoice.Element2:
        assert np.all(sizes == 6)
    # the multiplier is the last entry of its patch
    np.testing.assert_array_equal(patches.dofs[patches.ptr[1:] - 1],
                                  S.sizes[1] + np.arange(S.sizes[2]))


def test_single_patch_sweep_is_an_exact_solve():
    K = np.array([[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]])
    c = np.array([[0.3, 0.4, 0.3]])
    B = csr(np.block([[K, -c.T], [-c, np.zeros((1, 1))]]))
    b = np.array([1.0, 0.0, 2.0, 0.5])
    patches = build_vanka_patches(B, 3)
    x = np.zeros(4)
    vanka_sweep(B, patches, x, b)
    np.testing.assert_allclose(B @ x, b, atol=1e-14)


def test_singular_patch_is_reported():
    B = csr(np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [1.0, 1.0, 0.0]]))
    with pytest.raises(SingularPatchError) as exc:
        build_vanka_patches(B, 2)
    assert exc.value.multiplier == 0


def test_uncovered_v2_dofs_warn():
    B = csr(np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]))
    with pytest.warns(RuntimeWarning):
        build_vanka_patches(B, 2)


def _a1_hierarchy(level, steps=2):
    S = assemble_system(ProblemConfig(), level, level)
    ops, spaces = a1_levels(S)
    return S, mg.a1_hierarchy(ops, spaces, 1.0, steps, steps)


def _b_hierarchy(ec, level, steps):
    S = assemble_system(ProblemConfig(element_choice=ec), level, level)
    ops, pairs = b_levels(S)
    return S, mg.b_hierarchy(ops, pairs, steps, steps)


def _contraction(hier, A, cycles=8, seed=0):
    # error propagation e <- e - V(A e), measured in the energy norm
    e = np.random.default_rng(seed).standard_normal(A.shape[0])
    norms = [np.sqrt(e @ (A @ e))]
    for _ in range(cycles):
        e = e - hier.apply(A @ e)
        norms.append(np.sqrt(e @ (A @ e)))
    return (norms[-1] / norms[2]) ** (1.0 / (cycles - 2))


def test_a1_v_cycle_contraction_is_h_independent():
    rates = []
    for level in (4, 5, 6):
        S, hier = _a1_hierarchy(level)
        rates.append(_contraction(hier, S.A1))
    assert max(rates) <= 0.25
    assert max(rates) - min(rates) < 0.15


def test_single_level_hierarchy_is_a_direct_solve():
    S, _ = _a1_hierarchy(3)
    hier = MgHierarchy([S.A1], [None], [None])
    b = np.random.default_rng(3).standard_normal(S.A1.shape[0])
    np.testing.assert_allclose(S.A1 @ hier.apply(b), b, atol=1e-12)


@pytest.mark.parametrize("which", ["a1", "b1", "b2"])
def test_v_cycle_is_linear_and_transpose_is_adjoint(which):
    if which == "a1":
        _, hier = _a1_hierarchy(4)
    else:
        ec = ElementChoice.Element1 if which == "b1" else ElementChoice.Element2
        _, hier = _b_hierarchy(ec, 4, 2)
    n = hier.n
    rng = np.random.default_rng(4)
    x, y = rng.standard_normal(n), rng.standard_normal(n)
    np.testing.assert_allclose(hier.apply(2 * x + y), 2 * hier.apply(x) + hier.apply(y),
                               atol=1e-10 * np.linalg.norm(hier.apply(x)))
    lhs = y @ hier.apply(x)
    rhs = x @ hier.apply(y, transpose=True)
    assert lhs == pytest.approx(rhs, rel=1e-10)
    # blocks of right-hand sides give the same result column by column
    X = np.column_stack([x, y])
    np.testing.assert_allclose(hier.apply(X)[:, 1], hier.apply(y), rtol=1e-12, atol=1e-14)


def test_element2_vanka_cycle_converges():
    S, hier = _b_hierarchy(ElementChoice.Element2, 5, 5)
    B = S.B()
    b = np.random.default_rng(5).standard_normal(B.shape[0])
    x = np.zeros_like(b)
    r0 = np.linalg.norm(b)
    for _ in range(10):
        x = x + hier.apply(b - B @ x)
    assert np.linalg.norm(b - B @ x) < 1e-6 * r0


def test_vanka_smoother_transpose_runs_in_reverse():
    S = assemble_system(ProblemConfig(element_choice=ElementChoice.Element2), 3, 3)
    B = S.B()
    sm = VankaSmoother(B, S.sizes[1])
    rng = np.random.default_rng(6)
    u, v = rng.standard_normal(B.shape[0]), rng.standard_normal(B.shape[0])

    def smooth(b, t):
        x = np.zeros_like(b)
        return sm.smooth(x, b, 1, transpose=t)

    assert v @ smooth(u, False) == pytest.approx(u @ smooth(v, True), rel=1e-10)


def test_singular_coarse_operator_falls_back_to_pseudo_inverse():
    A = csr(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    with pytest.warns(RuntimeWarning):
        hier = MgHierarchy([A], [None], [None])
    x = hier.apply(np.array([1.0, -1.0]))
    np.testing.assert_allclose(A @ x, [1.0, -1.0], atol=1e-12)


def test_mg_config_defaults():
    cfg = MgConfig()
    assert (cfg.smooth_steps, cfg.sor_omega, cfg.cycles) == (2, 1.0, 1)
