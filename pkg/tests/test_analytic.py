from __future__ import annotations

import math

import numpy as np
import pytest

from physics.analytic import (
    PICO,
    SphereModel,
    analytic_design_table,
    cap_crossover_concentration,
    compare_krogh,
    f_mu,
    krogh_profile,
    krogh_wall_flux,
    krogh_zero_crossing,
    poiseuille,
    pump_benefit,
    radial_sphere_uptake,
    shell_benefit,
    shell_benefit_optimum,
    sphere_absorption_power,
    sphere_radius,
    thin_shell_benefit,
)
from utils.scenario import PRESETS, apply_overrides, derived_quantities, with_capacity


@pytest.fixture
def radius(default_cfg):
    return sphere_radius(derived_quantities(default_cfg).robot_volume)


def test_equivalent_sphere_radius(radius):
    assert radius == pytest.approx(6.40e-7, rel=5e-3)


@pytest.mark.parametrize("concentration, expected_pW", [(3.0e22, 320.0), (7.0e22, 750.0)])
def test_perfect_absorber_power(default_cfg, radius, concentration, expected_pW):
    power = sphere_absorption_power(radius, concentration, default_cfg) * PICO
    assert power == pytest.approx(expected_pW, rel=0.02)


def test_pump_benefit_by_capacity(default_cfg):
    high_cfg, low_cfg = with_capacity(default_cfg, 'high'), with_capacity(default_cfg, 'low')
    high = pump_benefit(SphereModel.from_config(high_cfg, 3.0e22), derived_quantities(high_cfg).max_robot_uptake)
    low = pump_benefit(SphereModel.from_config(low_cfg, 3.0e22), derived_quantities(low_cfg).max_robot_uptake)

    assert high.uncapped == pytest.approx(2.0, rel=0.05)
    assert high.capped == pytest.approx(high.uncapped)
    assert low.uncapped == pytest.approx(41.9, rel=0.02)
    assert low.capped == pytest.approx(34.2, rel=0.03)


def test_f_mu_limits():
    assert f_mu(1e-3, 1.0) == pytest.approx(1e-6 / 3.0, rel=1e-3)
    assert f_mu(100.0, 1.0) == pytest.approx(0.99)


@pytest.mark.parametrize("ratio", [0.27, 1.0, 1.92, 5.0])
def test_radial_solver_matches_closed_form(ratio):
    assert radial_sphere_uptake(ratio, 1.0) == pytest.approx(f_mu(ratio, 1.0), rel=5e-3)


def test_thin_shell_optimum():
    ratio, best = shell_benefit_optimum()
    assert ratio == pytest.approx(3.5, abs=0.5)
    assert best - 1.0 == pytest.approx(0.12, abs=0.03)


def test_thin_shell_benefit_small_at_low_capacity(default_cfg):
    low = SphereModel.from_config(with_capacity(default_cfg, 'low'))
    high = SphereModel.from_config(with_capacity(default_cfg, 'high'))
    assert thin_shell_benefit(low.ratio) - 1.0 < 0.01
    assert thin_shell_benefit(high.ratio) - 1.0 == pytest.approx(0.10, abs=0.03)


def test_finite_shell_benefit_is_bounded_by_thin_shell_limit(default_cfg):
    sphere = SphereModel.from_config(with_capacity(default_cfg, 'high'))
    benefit = shell_benefit(sphere.radius, sphere.mu, 0.1 * sphere.radius)
    assert 1.0 < benefit <= thin_shell_benefit(sphere.ratio) * 1.005


def test_cap_crossover_lies_between_design_concentrations(default_cfg):
    low = cap_crossover_concentration(with_capacity(default_cfg, 'low'))
    high = cap_crossover_concentration(with_capacity(default_cfg, 'high'))
    assert 1.0e22 < low < 3.0e22
    assert high > 7.0e22


def test_design_table_rows(default_cfg):
    rows = analytic_design_table(default_cfg)
    assert [(r.capacity, r.concentration) for r in rows] == [
        ('high', 3.0e22), ('high', 7.0e22), ('low', 3.0e22), ('low', 7.0e22)]
    for row in rows:
        assert row.pumps_power_pW >= row.no_pumps_power_pW
        assert row.capped_benefit <= row.benefit * (1.0 + 1e-12)


@pytest.mark.parametrize("preset", sorted(PRESETS))
def test_krogh_flux_balance(default_cfg, preset):
    influx, consumption = krogh_wall_flux(apply_overrides(default_cfg, PRESETS[preset]))
    assert influx == pytest.approx(consumption, rel=1e-9)


def test_krogh_profile_shape(default_cfg):
    r = np.linspace(default_cfg.vessel_radius, default_cfg.tissue_radius, 200)
    C = krogh_profile(r, default_cfg, 5.0e22)
    assert C[0] == pytest.approx(5.0e22)
    assert np.all(np.diff(C) <= 0.0)
    assert np.allclose(krogh_profile(r, default_cfg, 5.0e22, power_density=0.0), 5.0e22)


def test_krogh_zero_crossing(default_cfg):
    high = apply_overrides(default_cfg, PRESETS['high_demand'])
    crossing = krogh_zero_crossing(high, 1.0e22)
    assert high.vessel_radius < crossing < high.tissue_radius
    assert krogh_zero_crossing(default_cfg, 7.0e22) is None


def test_compare_krogh_deviation_is_relative_to_wall(default_cfg):
    r = np.linspace(default_cfg.vessel_radius, default_cfg.tissue_radius, 20)
    exact = krogh_profile(r, default_cfg, 4.0e22)
    comparison = compare_krogh(r, exact * 1.01, 5e-5, 4.0e22, default_cfg)
    assert comparison.max_deviation == pytest.approx(0.01, rel=1e-6)


@pytest.mark.parametrize("dP, expected", [(1.0e5, 2.0e-4), (5.0e5, 1.0e-3)])
def test_poiseuille_mean_speed(default_cfg, dP, expected):
    tube = poiseuille(apply_overrides(default_cfg, {'pressure_gradient': dP}))
    assert tube.mean_velocity == pytest.approx(expected, rel=1e-12)
    assert tube.velocity(0.0) == pytest.approx(2.0 * expected)
    assert tube.volumetric_flow == pytest.approx(math.pi * 16e-12 * expected)
