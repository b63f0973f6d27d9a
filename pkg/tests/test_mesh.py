from __future__ import annotations

import math

import numpy as np
import pytest

from physics.mesh import BoundaryTag, Region, build_mesh, graded_nodes, shell_thickness
from utils.errors import MeshError
from utils.scenario import apply_overrides, derived_quantities, refined_mesh


def test_graded_nodes_keep_breaks_and_respect_spacing():
    nodes = graded_nodes([0.0, 1.0, 3.0], lambda x: np.full_like(x, 0.25))
    assert nodes[0] == 0.0 and nodes[-1] == 3.0
    assert np.any(np.isclose(nodes, 1.0))
    assert np.diff(nodes).max() <= 0.25 * (1 + 1e-9)


def test_robot_free_mesh_has_no_robot_cells(coarse):
    mesh = build_mesh(coarse(rings=0))
    assert not mesh.robot.any()
    assert mesh.ring_count == 0
    assert mesh.boundary_faces(BoundaryTag.ROBOT_PLASMA_FACE).size == 0
    assert mesh.robot_face_spacing() == 0.0


def test_vessel_wall_is_a_mesh_line(coarse):
    mesh = build_mesh(coarse(rings=10))
    assert mesh.r_nodes[mesh.n_lumen] == pytest.approx(mesh.vessel_radius, rel=1e-12)
    assert np.all(mesh.region[mesh.n_lumen:, :] == int(Region.TISSUE))


def test_ring_volume_matches_annulus(coarse):
    cfg = coarse(rings=10)
    mesh = build_mesh(cfg)
    R, size = cfg.vessel_radius, cfg.robot.size
    expected = math.pi * (R ** 2 - (R - size) ** 2) * size * 10
    assert mesh.region_volume(Region.ROBOT_INTERIOR) == pytest.approx(expected, rel=1e-9)
    assert sorted(set(mesh.ring_id[mesh.robot].tolist())) == list(range(10))


def test_robot_faces_respect_target_spacing(coarse):
    cfg = coarse(rings=1, mesh__face_spacing=1.0e-7)
    mesh = build_mesh(cfg)
    assert mesh.robot_face_spacing() <= 1.0e-7 * (1 + 1e-6)
    faces = mesh.boundary_faces(BoundaryTag.ROBOT_PLASMA_FACE)
    # inner cylinder plus upstream and downstream end faces
    assert set(faces.axis.tolist()) == {0, 1}
    total = faces.area.sum()
    R, inner, size = cfg.vessel_radius, cfg.vessel_radius - cfg.robot.size, cfg.robot.size
    expected = 2 * math.pi * inner * size + 2 * math.pi * (R ** 2 - inner ** 2)
    assert total == pytest.approx(expected, rel=1e-9)


def test_spaced_rings(coarse):
    cfg = coarse(rings=2, robot__ring_positions=(2.0e-5, 6.0e-5))
    mesh = build_mesh(cfg)
    spans = [z for span in mesh.ring_spans for z in span]
    assert spans == pytest.approx([2.0e-5, 2.1e-5, 6.0e-5, 6.1e-5])
    assert mesh.mid_aggregate_z() == pytest.approx(4.05e-5)


def test_shell_adds_a_node(coarse):
    cfg = coarse(rings=1, robot__shell_fraction=0.2)
    mesh = build_mesh(cfg)
    t = shell_thickness(cfg)
    assert 0.0 < t < cfg.robot.size
    assert np.any(np.isclose(mesh.r_nodes, mesh.robot_inner_radius + t, rtol=0, atol=1e-15))


def test_cell_budget_raises_mesh_error(coarse):
    with pytest.raises(MeshError):
        build_mesh(coarse(rings=10, mesh__max_cells=100))


def test_boundary_face_areas(coarse):
    cfg = coarse(rings=0)
    mesh = build_mesh(cfg)
    inlet = mesh.boundary_faces(BoundaryTag.INLET)
    assert inlet.area.sum() == pytest.approx(math.pi * cfg.vessel_radius ** 2, rel=1e-12)
    outer = mesh.boundary_faces(BoundaryTag.TISSUE_OUTER)
    assert outer.area.sum() == pytest.approx(2 * math.pi * cfg.tissue_radius * cfg.vessel_length, rel=1e-12)
    wall = mesh.boundary_faces(BoundaryTag.VESSEL_WALL)
    assert np.all(wall.partner_i == mesh.n_lumen)


def test_column_lookup(coarse):
    mesh = build_mesh(coarse(rings=0))
    j = mesh.column_at(5.0e-5)
    assert mesh.z_nodes[j] <= 5.0e-5 <= mesh.z_nodes[j + 1]
    assert mesh.column_at(-1.0) == 0
    assert mesh.column_at(1.0) == mesh.nz - 1


def test_default_scenario_fits_the_cell_budget(low_cfg):
    mesh = build_mesh(apply_overrides(low_cfg, {'robot.ring_count': 10}))
    assert mesh.cell_count <= low_cfg.mesh.max_cells


def test_refined_mesh_halves_the_robot_face_spacing(coarse):
    cfg = coarse(rings=1, mesh__face_spacing=None)
    refined = refined_mesh(cfg)
    assert refined.mesh.face_spacing == pytest.approx(0.5 * derived_quantities(cfg).face_spacing)
    assert refined.mesh.max_axial_spacing == pytest.approx(0.5 * cfg.mesh.max_axial_spacing)

    base, fine = build_mesh(cfg), build_mesh(refined)
    assert fine.robot_face_spacing() <= 0.5 * derived_quantities(cfg).face_spacing * (1 + 1e-6)
    assert fine.robot_face_spacing() < base.robot_face_spacing()
    assert fine.cell_count > base.cell_count
