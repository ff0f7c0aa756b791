import numpy as np
import pytest

from fddlm import mesh
from fddlm.elements import gauss_rule, jacobians, map_points


def polygon_area(corners):
    x, y = corners[..., 0], corners[..., 1]
    return 0.5 * np.sum(x * np.roll(y, -1, -1) - np.roll(x, -1, -1) * y, axis=-1)


def mapped_area(level, order=2):
    rule = gauss_rule(order)
    J = jacobians(level.cell_coords(), rule.points)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    return float(np.sum(det * rule.weights))


def test_square_single_cell():
    h = mesh.build_square_hierarchy(1.4, 1)
    lev = h.level(1)
    assert lev.n_cells == 1
    np.testing.assert_array_equal(lev.cell_coords()[0],
                                  [[-1.4, -1.4], [1.4, -1.4], [1.4, 1.4], [-1.4, 1.4]])
    assert lev.boundary_vertex_flags.all()


def test_square_counts_and_area():
    h = mesh.build_square_hierarchy(1.4, 4)
    assert (h.finest.n_cells, h.finest.n_vertices) == (64, 81)
    assert [lev.n_cells for lev in h.levels] == [1, 4, 16, 64]
    h = mesh.build_square_hierarchy(1.0, 3)
    assert abs(mapped_area(h.finest) - 4.0) < 1e-14


def test_square_cells_congruent_and_nested():
    h = mesh.build_square_hierarchy(1.4, 4)
    for k in range(1, 5):
        c = h.level(k).cell_coords()
        side = c[:, 2] - c[:, 0]
        np.testing.assert_allclose(side, h.mesh_size(k), rtol=1e-14)
        np.testing.assert_allclose(c[:, 1, 1], c[:, 0, 1])
    for k in range(1, 4):
        coarse, fine = h.level(k).vertices, h.level(k + 1).vertices
        fine_set = {tuple(v) for v in fine}
        assert all(tuple(v) in fine_set for v in coarse)


@pytest.mark.parametrize("builder", [mesh.build_square_hierarchy, mesh.build_disk_hierarchy])
def test_zero_levels_rejected(builder):
    with pytest.raises(ValueError):
        builder(1.0, 0)


def test_disk_coarse_layout():
    lev = mesh.build_disk_hierarchy(1.0, 1).level(1)
    assert lev.n_cells == 5
    # conforming 5-block layout: 4 inner + 4 outer vertices
    assert lev.n_vertices == 8
    r = np.linalg.norm(lev.vertices, axis=1)
    assert np.sum(np.abs(r - 1.0) < 1e-12) == 4
    np.testing.assert_allclose(r[:4], 0.7 / np.sqrt(2.0))


def test_disk_boundary_on_circle():
    for k, lev in enumerate(mesh.build_disk_hierarchy(1.0, 4).levels, 1):
        r = np.linalg.norm(lev.vertices[lev.boundary_vertex_flags], axis=1)
        assert np.all(np.abs(r - 1.0) < 1e-12)
        assert lev.boundary_vertex_flags.sum() == 4 * 2 ** (k - 1)


def test_disk_area_converges():
    h = mesh.build_disk_hierarchy(1.0, 6)
    # oracle: Jacobian-weighted quadrature vs exact polygon area of each level
    areas = np.array([mapped_area(lev) for lev in h.levels])
    polys = np.array([polygon_area(lev.cell_coords()).sum() for lev in h.levels])
    np.testing.assert_allclose(areas, polys, rtol=1e-13)
    err = np.pi - areas
    assert np.all(err > 0)
    ratios = err[1:-1] / err[2:]
    np.testing.assert_allclose(ratios[1:], 4.0, rtol=0.02)
    # the boundary is an inscribed 2^(k+1)-gon
    k = np.arange(1, 7)
    m = 2.0 ** (k + 1)
    np.testing.assert_allclose(areas, 0.5 * m * np.sin(2 * np.pi / m), rtol=1e-13)
    assert abs(err[4]) < 1e-2


def test_disk_cells_ccw_and_nested():
    h = mesh.build_disk_hierarchy(1.0, 4)
    for k in range(1, 5):
        lev = h.level(k)
        assert np.all(polygon_area(lev.cell_coords()) > 0)
        rule = gauss_rule(3)
        J = jacobians(lev.cell_coords(), rule.points)
        assert np.all(np.linalg.det(J) > 0)
    for k in range(1, 4):
        coarse, fine = h.level(k), h.level(k + 1)
        np.testing.assert_array_equal(fine.vertices[:coarse.n_vertices], coarse.vertices)
        assert np.all(fine.parent_cell_map == np.repeat(np.arange(coarse.n_cells), 4))


def _boundary_polygon(lev):
    cells = lev.cells
    edges = np.stack([cells, np.roll(cells, -1, axis=1)], axis=-1).reshape(-1, 2)
    key = np.sort(edges, axis=1)
    _, inv, cnt = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    bnd = edges[cnt[inv] == 1]
    nxt = dict(bnd)
    start = bnd[0, 0]
    loop = [start]
    while nxt[loop[-1]] != start:
        loop.append(nxt[loop[-1]])
    assert len(loop) == len(bnd)
    return lev.vertices[loop]


def test_disk_boundary_convex_ccw():
    for lev in mesh.build_disk_hierarchy(1.0, 4).levels:
        poly = _boundary_polygon(lev)
        a = np.roll(poly, -1, 0) - poly
        b = np.roll(poly, -2, 0) - np.roll(poly, -1, 0)
        cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        assert np.all(cross > 0)
        ang = np.unwrap(np.arctan2(poly[:, 1], poly[:, 0]))
        total = ang[-1] - ang[0] + np.angle(
            complex(*poly[0]) / complex(*poly[-1]))
        assert abs(total - 2 * np.pi) < 1e-12


def test_parent_maps_total():
    for h in (mesh.build_square_hierarchy(1.4, 4), mesh.build_disk_hierarchy(1.0, 4)):
        assert h.level(1).parent_cell_map is None
        for k in range(2, 5):
            fine, coarse = h.level(k), h.level(k - 1)
            counts = np.bincount(fine.parent_cell_map, minlength=coarse.n_cells)
            assert np.all(counts == 4)


def test_locate_corner_and_origin():
    h = mesh.build_square_hierarchy(1.4, 4)
    for k in range(1, 5):
        cell, ref = mesh.locate_point(h, k, (-1.4, -1.4))
        assert cell == 0
        np.testing.assert_array_equal(ref, [0.0, 0.0])
    cell, ref = mesh.locate_point(h, 4, (0.0, 0.0))
    # four cells meet at the origin; the smallest index is cell (3, 3)
    assert cell == 3 * 8 + 3
    np.testing.assert_allclose(ref, [1.0, 1.0])


def test_locate_round_trip():
    h = mesh.build_square_hierarchy(1.4, 5)
    rng = np.random.default_rng(1)
    p = rng.uniform(-1.4, 1.4, size=(1000, 2))
    cell, ref = mesh.locate_point(h, 5, p)
    assert np.all((ref >= 0) & (ref <= 1))
    corners = h.level(5).cell_coords()[cell]
    back = np.array([map_points(c[None], r[None])[0, 0] for c, r in zip(corners, ref)])
    np.testing.assert_allclose(back, p, atol=1e-12, rtol=0)


def test_locate_outside():
    h = mesh.build_square_hierarchy(1.4, 3)
    with pytest.raises(mesh.OutOfDomainError):
        mesh.locate_point(h, 3, (1.5, 0.0))


def test_text_export_round_trip(tmp_path):
    lev = mesh.build_disk_hierarchy(1.0, 2).level(2)
    path = tmp_path / "disk.txt"
    mesh.write_level(lev, path)
    v, c = mesh.read_level(path)
    np.testing.assert_array_equal(v, lev.vertices)
    np.testing.assert_array_equal(c, lev.cells)
    first = path.read_text().splitlines()[0].split()
    assert len(first) == 2
