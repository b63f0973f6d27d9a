"""End-to-end runs of the stage pipeline on coarse meshes."""

from __future__ import annotations

import numpy as np
import pytest

from orchestrator.context_store import StageStatus
from orchestrator.orchestrator import run_pipeline
from physics.oxygen_transport import RobotDesign
from physics.thermal import solve_heat
from stages import STAGE_CLASSES
from utils.scenario import PumpMode

PUMPS_HIGH = RobotDesign(pumps=True, capacity='high')
NO_PUMPS_HIGH = RobotDesign(pumps=False, capacity='high')


@pytest.fixture(scope="module")
def pumps_run(coarse):
    return run_pipeline(coarse(rings=10), PUMPS_HIGH, with_reference=True)


@pytest.fixture(scope="module")
def no_pumps_run(coarse):
    return run_pipeline(coarse(rings=10), NO_PUMPS_HIGH)


@pytest.fixture(scope="module")
def robot_free_run(coarse):
    return run_pipeline(coarse(rings=0), NO_PUMPS_HIGH)


def test_every_stage_runs(pumps_run):
    assert set(pumps_run.records) == {s.stage_name for s in STAGE_CLASSES}
    assert all(r.status in (StageStatus.COMPLETED, StageStatus.FLAGGED) for r in pumps_run.records.values())
    assert pumps_run.converged


def test_oxygen_and_heat_budgets_close(pumps_run, no_pumps_run):
    for context in (pumps_run, no_pumps_run):
        assert context.balance.relative_residual < 0.01
        assert context.temperature.balance.relative_residual < 0.01


def test_upstream_ring_gets_the_most_power(pumps_run):
    per_robot = pumps_run.power.per_robot_pW
    assert per_robot.size == 10
    assert per_robot[0] > per_robot[4]
    assert pumps_run.ring_profile.upstream_is_max


def test_pumps_beat_no_pumps(pumps_run, no_pumps_run):
    assert pumps_run.power.mean_robot_pW > no_pumps_run.power.mean_robot_pW
    assert pumps_run.power.parasitic_pW > 0.0
    assert no_pumps_run.power.parasitic_pW == 0.0


def test_power_and_uptake_magnitudes(pumps_run):
    assert 8.0 < pumps_run.power.mean_robot_pW < 30.0
    assert pumps_run.power.aggregate_uptake == pytest.approx(5.0e9, rel=0.5)


def test_blood_leaves_less_saturated(pumps_run):
    saturation = pumps_run.saturation
    assert saturation.outlet < saturation.inlet
    assert 0.0 <= saturation.minimum and saturation.S.max() <= 1.0


def test_concentration_stays_non_negative(pumps_run):
    c_in = pumps_run.cfg.oxygen.inlet_concentration
    assert pumps_run.concentration.C.min() >= -1e-6 * c_in


def test_temperature_rise_is_small_positive_and_linear(pumps_run):
    rise = pumps_run.temperature.max_rise
    assert 0.0 < rise < 1e-3
    doubled = solve_heat(pumps_run.mesh, pumps_run.flow, 2.0 * pumps_run.power_density, pumps_run.cfg)
    assert doubled.max_rise == pytest.approx(2.0 * rise, rel=1e-6)


def test_robots_depress_oxygen_upstream(pumps_run):
    assert pumps_run.reference is not None
    drops = pumps_run.upstream
    assert set(drops) == {5.0e-6, 30.0e-6}
    assert drops[5.0e-6] > drops[30.0e-6] > -1e-3


def test_robot_free_run_matches_krogh(robot_free_run):
    assert robot_free_run.power.aggregate_pW == 0.0
    assert robot_free_run.krogh.max_deviation < 0.05
    assert np.abs(robot_free_run.saturation.disequilibrium).max() < 2e-3
    assert robot_free_run.flow_reduction == pytest.approx(1.0, abs=0.03)


def test_summary_lists_headline_numbers(pumps_run):
    summary = pumps_run.get_summary()
    assert summary['design'] == PUMPS_HIGH.label
    assert summary['rings'] == 10
    assert summary['mean_robot_pW'] == pytest.approx(pumps_run.power.mean_robot_pW)
    assert summary['converged']


def test_duty_cycle_lowers_total_power(coarse):
    design = RobotDesign(pumps=True, capacity='high', pump_mode=PumpMode.DUTY_CYCLE)
    context = run_pipeline(coarse(rings=10), design)
    assert len(context.strategy.phase_reports) == 2
    assert context.power.aggregate_pW < context.baseline_power.aggregate_pW


@pytest.mark.slow
def test_uniform_flux_keeps_faces_non_negative(coarse):
    design = RobotDesign(pumps=True, capacity='high', pump_mode=PumpMode.UNIFORM_FLUX)
    context = run_pipeline(coarse(rings=10), design)
    c_in = context.cfg.oxygen.inlet_concentration
    assert context.strategy.uniform_flux > 0.0
    assert context.concentration.face_concentration().min() >= -1e-9 * c_in
    assert context.power.min_robot_pW > context.baseline_power.min_robot_pW
