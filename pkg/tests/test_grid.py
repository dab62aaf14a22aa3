import numpy as np
import pytest

from memnet import grid
from memnet.errors import MeshError


def test_counts_2x2(unit_spec):
    mesh = grid.build_mesh(unit_spec, 2, 2)
    assert mesh.n_cells == 4
    assert mesh.n_faces == 12
    assert mesh.boundary_faces.size == 8
    assert mesh.faces_with_tag(grid.D1).size == 2
    assert mesh.faces_with_tag(grid.D2).size == 2
    assert mesh.faces_with_tag(grid.NEUMANN).size == 4


def test_face_count_formula(unit_spec):
    for nx, ny in ((2, 3), (5, 4), (7, 7)):
        mesh = grid.build_mesh(unit_spec, nx, ny)
        assert mesh.n_faces == nx * (ny - 1) + (nx - 1) * ny + 2 * (nx + ny)
        assert mesh.boundary_faces.size == 2 * (nx + ny)


def test_default_layout_tags_left_edge(unit_spec):
    mesh = grid.build_mesh(unit_spec, 4, 4)
    left = mesh.faces_with_tag(grid.D1)
    assert np.all(mesh.face_mid_x[left] == 0.0)
    assert left.size == 4
    right = mesh.faces_with_tag(grid.D2)
    assert np.all(mesh.face_mid_x[right] == 1.0)


def test_boundary_tag_partition(unit_spec):
    mesh = grid.build_mesh(unit_spec, 6, 9)
    total = sum(
        mesh.faces_with_tag(tag).size
        for tag in (grid.D1, grid.D2, grid.NEUMANN)
    )
    assert total == 2 * (6 + 9)


def test_empty_terminal_rejected():
    with pytest.raises(MeshError):
        grid.DomainSpec(boundary_layout={"right": "N"})


def test_zero_measure_segment_rejected():
    with pytest.raises(MeshError):
        grid.DomainSpec(boundary_layout={
            "right": [(0.0, 0.0, "D2"), (0.0, 1.0, "N")],
        })


def test_coarse_mesh_rejected(unit_spec):
    with pytest.raises(MeshError):
        grid.build_mesh(unit_spec, 1, 4)


def test_segment_layout_tags():
    spec = grid.DomainSpec(boundary_layout={
        "left": [(0.0, 0.5, "D1"), (0.5, 1.0, "N")],
        "right": [(0.0, 0.5, "N"), (0.5, 1.0, "D2")],
    })
    mesh = grid.build_mesh(spec, 4, 4)
    left_d1 = mesh.faces_with_tag(grid.D1)
    assert np.all(mesh.face_mid_y[left_d1] < 0.5)
    assert left_d1.size == 2


def test_terminal_with_no_faces_rejected():
    spec = grid.DomainSpec(boundary_layout={
        "left": [(0.0, 0.01, "D1"), (0.01, 1.0, "N")],
    })
    with pytest.raises(MeshError):
        grid.build_mesh(spec, 4, 4)


def test_integrate_constant(unit_spec):
    mesh = grid.build_mesh(unit_spec, 5, 7)
    assert grid.integrate_cells(mesh, np.ones(mesh.n_cells)) == pytest.approx(1.0)
    spec = grid.DomainSpec(length_x=2.0, length_y=1.0)
    mesh = grid.build_mesh(spec, 8, 4)
    field = np.full(mesh.n_cells, 3.0)
    assert grid.integrate_cells(mesh, field) == pytest.approx(6.0, rel=1e-12)


def test_integrate_linear_field_midpoint_exact(unit_spec):
    # midpoint quadrature is exact for linear integrands: integral of x = 1/2
    mesh = grid.build_mesh(unit_spec, 64, 64)
    assert grid.integrate_cells(mesh, mesh.xc) == pytest.approx(0.5, abs=1e-12)


def test_integrate_length_mismatch(mesh16):
    with pytest.raises(ValueError):
        grid.integrate_cells(mesh16, np.ones(5))


def test_area_partition(unit_spec):
    spec = grid.DomainSpec(length_x=1.5, length_y=0.75)
    mesh = grid.build_mesh(spec, 9, 5)
    total = mesh.cell_area * mesh.n_cells
    assert total == pytest.approx(1.5 * 0.75, rel=1e-12)


def test_deterministic_construction(unit_spec):
    a = grid.build_mesh(unit_spec, 6, 5)
    b = grid.build_mesh(unit_spec, 6, 5)
    np.testing.assert_array_equal(a.face_owner, b.face_owner)
    np.testing.assert_array_equal(a.face_tag, b.face_tag)
    np.testing.assert_array_equal(a.face_mid_x, b.face_mid_x)


def test_divergence_gradient_adjoint(mesh16, rng):
    # <div J, phi> + <J, grad phi>_w = boundary pairing; with phi zero on
    # Dirichlet faces and J zero on Neumann faces the two sums cancel.
    mesh = mesh16
    J = rng.standard_normal(mesh.n_faces)
    J[mesh.faces_with_tag(grid.NEUMANN)] = 0.0
    phi = rng.standard_normal(mesh.n_cells)
    div = grid.divergence(mesh, J)
    lhs = float(np.sum(div * phi) * mesh.cell_area)
    grad_phi = grid.face_gradient(mesh, phi, np.zeros(mesh.n_faces))
    rhs = -grid.face_inner(mesh, J, grad_phi)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)
