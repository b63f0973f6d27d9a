"""Shared fixtures: scenarios on meshes coarse enough for the unit suite."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from physics.flow import solve_flow, trace_core_boundary, with_core_speed
from physics.mesh import build_mesh
from utils.scenario import ScenarioConfig, apply_overrides, load_scenario

COARSE_MESH = {
    'mesh.face_spacing': 2.5e-7,
    'mesh.wall_spacing': 2.5e-7,
    'mesh.growth': 1.3,
    'mesh.max_radial_spacing': 5.0e-7,
    'mesh.max_axial_spacing': 4.0e-6,
    'mesh.max_tissue_spacing': 4.0e-6,
    'mesh.saturation_points': 200,
}


def coarse_scenario(preset: str = 'low_demand', rings: int = 10, **overrides) -> ScenarioConfig:
    """Preset on the coarse mesh; keyword overrides use `__` for the group dot."""
    cfg = load_scenario(f"preset = {preset}")
    values = {**COARSE_MESH, 'robot.ring_count': rings, 'robot.ring_positions': ()}
    values.update({key.replace('__', '.'): value for key, value in overrides.items()})
    return apply_overrides(cfg, values)


@pytest.fixture
def default_cfg() -> ScenarioConfig:
    return ScenarioConfig()


@pytest.fixture
def low_cfg() -> ScenarioConfig:
    return load_scenario("preset = low_demand")


def hydrodynamics(cfg: ScenarioConfig):
    """Mesh tagged with the traced core boundary, and the flow over it."""
    mesh = build_mesh(cfg)
    flow = solve_flow(mesh, cfg)
    boundary = trace_core_boundary(flow, mesh, cfg)
    return mesh.with_core_boundary(boundary), with_core_speed(flow, boundary)


@pytest.fixture(scope="session")
def coarse():
    return coarse_scenario


@pytest.fixture(scope="session")
def solved_flow():
    return hydrodynamics


@pytest.fixture
def coarse_mesh_options():
    """COARSE_MESH as repeated `--set key=value` command-line options."""
    options = []
    for key, value in COARSE_MESH.items():
        options += ['--set', f"{key}={value}"]
    return options
