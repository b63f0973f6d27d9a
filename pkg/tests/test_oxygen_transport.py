from __future__ import annotations

import numpy as np
import pytest

from physics.analytic import PICO
from physics.mesh import build_mesh
from physics.oxygen_transport import (
    RingMode,
    RobotDesign,
    robot_boundary_condition,
    site_density_field,
    solve_coupled,
    species_balance_audit,
    tissue_power_profile,
)
from physics.robot_power import power_report
from utils.errors import ConfigError, MeshError
from utils.scenario import CAPACITY_SITE_DENSITY, PumpMode, SaturationAverage, derived_quantities


@pytest.mark.parametrize("label, pumps, capacity", [
    ("pumps-high", True, 'high'), ("nopumps-low", False, 'low'), (" Pumps-Low ", True, 'low')])
def test_design_labels(label, pumps, capacity):
    design = RobotDesign.parse(label)
    assert (design.pumps, design.capacity) == (pumps, capacity)
    assert design.label == f"{'pumps' if pumps else 'nopumps'}-{capacity}"


@pytest.mark.parametrize("label", ["pumps", "pumps-medium", "maybe-high"])
def test_bad_design_labels(label):
    with pytest.raises(ConfigError):
        RobotDesign.parse(label)


def test_design_applies_to_config(default_cfg):
    cfg = RobotDesign(pumps=False, capacity='low').apply(default_cfg)
    assert not cfg.robot.pumps
    assert cfg.robot.site_density == CAPACITY_SITE_DENSITY['low']
    assert RobotDesign.from_config(cfg) == RobotDesign(pumps=False, capacity='low')


def test_duty_cycle_alternates_rings(default_cfg):
    design = RobotDesign(pump_mode=PumpMode.DUTY_CYCLE, duty_cycle_phase=1)
    boundary = robot_boundary_condition(design, default_cfg, 4)
    assert boundary.ring_modes == (RingMode.INERT, RingMode.ABSORB, RingMode.INERT, RingMode.ABSORB)
    with pytest.raises(ConfigError):
        robot_boundary_condition(RobotDesign(pump_mode=PumpMode.DUTY_CYCLE), default_cfg, 4)


def test_uniform_flux_needs_a_non_negative_flux(default_cfg):
    boundary = robot_boundary_condition(RobotDesign(pump_mode=PumpMode.UNIFORM_FLUX, uniform_flux=2.0e19),
                                        default_cfg, 2)
    assert boundary.ring_modes == (RingMode.FLUX, RingMode.FLUX)
    assert boundary.ring_flux == (2.0e19, 2.0e19)
    with pytest.raises(ConfigError):
        robot_boundary_condition(RobotDesign(pump_mode=PumpMode.UNIFORM_FLUX, uniform_flux=-1.0), default_cfg, 2)


def test_no_pumps_has_no_surface_modes(default_cfg):
    boundary = robot_boundary_condition(RobotDesign(pumps=False), default_cfg, 10)
    assert not boundary.pumps and boundary.ring_modes == ()


def test_shell_concentrates_sites(coarse):
    cfg = coarse(rings=1, robot__shell_fraction=0.25)
    mesh = build_mesh(cfg)
    density = site_density_field(mesh, cfg, 0.25)
    total = float(np.sum(density * mesh.volume))
    assert total == pytest.approx(cfg.robot.site_density * mesh.volume[mesh.robot].sum(), rel=1e-6)
    assert density.max() == pytest.approx(4.0 * cfg.robot.site_density)

    plain = build_mesh(coarse(rings=1))
    with pytest.raises(MeshError):
        site_density_field(plain, cfg, 0.25)


@pytest.mark.parametrize("average", list(SaturationAverage))
def test_robot_free_solve_conserves_oxygen(coarse, solved_flow, average):
    cfg = coarse(rings=0, rbc__saturation_average=average)
    mesh, flow = solved_flow(cfg)
    field, saturation, state = solve_coupled(mesh, flow, cfg, RobotDesign(pumps=False))
    assert state.converged
    assert field.robot_uptake == 0.0
    assert field.tissue_uptake > 0.0
    balance = species_balance_audit(field, saturation, flow, cfg)
    assert balance.relative_residual < 0.01
    assert saturation.outlet < saturation.inlet


def test_oxygen_carried_past_each_section(coarse, solved_flow):
    cfg = coarse(rings=2, solver__tolerance=1.0e-9, solver__max_iterations=400)
    mesh, flow = solved_flow(cfg)
    field, _, state = solve_coupled(mesh, flow, cfg, RobotDesign(pumps=True, capacity='high'))
    assert state.converged

    sinks = (field.tissue_uptake_cells + field.robot_uptake_cells - field.release_cells).sum(axis=0)
    sinks = sinks + np.bincount(field.faces.j, weights=field.face_uptake, minlength=mesh.nz)
    expected = field.inlet_influx - np.cumsum(sinks)
    assert field.section_flux.shape == (mesh.nz + 1,)
    assert field.section_flux[0] == field.inlet_influx
    assert field.section_flux[-1] == field.outlet_efflux
    assert np.abs(field.section_flux[1:] - expected).max() < 1.0e-3 * field.inlet_influx


def test_capacity_cap_holds_rings_at_the_limit(coarse, solved_flow):
    cfg = coarse(rings=2, robot__site_density=CAPACITY_SITE_DENSITY['low'], robot__site_rate=1.0e4)
    mesh, flow = solved_flow(cfg)
    design = RobotDesign(pumps=True, capacity='low')
    field, _, state = solve_coupled(mesh, flow, cfg, design)
    assert state.converged
    assert state.capacity_rounds >= 1
    assert field.capped_rings == (0, 1)

    derived = derived_quantities(cfg)
    per_robot = field.ring_uptake / cfg.robot.robots_per_ring
    assert per_robot == pytest.approx(np.full(2, derived.max_robot_uptake), rel=1e-9)

    report = power_report(field, cfg, state, design=design)
    assert report.capped_rings == (0, 1)
    assert report.per_robot_pW.max() <= derived.max_robot_power * PICO * (1 + 1e-9)


def _far_tissue_power(field, cfg):
    C = field.C[-1, :]
    return C / (cfg.tissue.half_saturation + C)


def test_high_demand_starves_far_tissue(coarse, solved_flow):
    cfg = coarse('high_demand', rings=0)
    mesh, flow = solved_flow(cfg)
    field, _, state = solve_coupled(mesh, flow, cfg, RobotDesign(pumps=False))
    assert state.converged
    far = _far_tissue_power(field, cfg)
    _, near = tissue_power_profile(field, cfg)
    assert far.max() < 0.95
    assert far.max() < near.max()


def test_low_demand_keeps_far_tissue_saturated(coarse, solved_flow):
    cfg = coarse('low_demand', rings=0)
    mesh, flow = solved_flow(cfg)
    field, _, state = solve_coupled(mesh, flow, cfg, RobotDesign(pumps=False))
    assert state.converged
    assert _far_tissue_power(field, cfg).min() > 0.95
