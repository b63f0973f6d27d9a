from __future__ import annotations

import numpy as np
import pytest

from physics.mesh import CoreBoundary
from physics.rbc_kinetics import (
    SaturationGrid,
    advance_saturation,
    equilibrium_ratio,
    hill_equilibrium,
    partial_pressure_ratio,
    unloading_function,
    unloading_rate,
    unloading_rate_derivatives,
)


def test_hill_curve_fixed_points():
    assert hill_equilibrium(1.0) == pytest.approx(0.5, abs=1e-15)
    assert hill_equilibrium(0.0) == 0.0
    assert hill_equilibrium(-0.5) == 0.0


def test_equilibrium_ratio_inverts_hill_curve():
    a = np.linspace(0.1, 3.0, 25)
    assert np.allclose(equilibrium_ratio(hill_equilibrium(a)), a, rtol=1e-10)


def test_unloading_function_vanishes_on_equilibrium_curve():
    a = np.linspace(0.05, 4.0, 100)
    assert np.abs(unloading_function(a, hill_equilibrium(a))).max() < 1e-9


def test_unloading_function_is_non_negative_off_curve():
    a, S = np.meshgrid(np.linspace(0.0, 3.0, 31), np.linspace(0.01, 0.99, 21))
    assert unloading_function(a, S).min() > -1e-12


def test_rate_drives_saturation_toward_equilibrium():
    a, S = np.meshgrid(np.linspace(0.1, 3.0, 30), np.linspace(0.05, 0.95, 19))
    gap = hill_equilibrium(a) - S
    away = np.abs(gap) > 1e-3
    rate = unloading_rate(a, S)
    assert np.all(np.sign(rate[away]) == np.sign(gap[away]))


def test_rate_scales_inversely_with_unloading_time():
    fast = unloading_rate(0.5, 0.8, unloading_time=0.038)
    slow = unloading_rate(0.5, 0.8, unloading_time=0.076)
    assert fast == pytest.approx(2.0 * slow)


def test_derivatives_match_finite_differences():
    a, S, h = 0.6, 0.55, 1e-7
    d_da, d_dS = unloading_rate_derivatives(a, S)
    fd_a = (unloading_rate(a + h, S) - unloading_rate(a - h, S)) / (2 * h)
    fd_S = (unloading_rate(a, S + h) - unloading_rate(a, S - h)) / (2 * h)
    assert d_da == pytest.approx(fd_a, rel=1e-4)
    assert d_dS == pytest.approx(fd_S, rel=1e-4)


def test_partial_pressure_ratio(default_cfg):
    # 7e22 molecule/m^3 is about 11.2 kPa; a ~ 3.2
    assert partial_pressure_ratio(7.0e22, default_cfg) == pytest.approx(1.6e-19 * 7.0e22 / 3500.0)


def _uniform_grid(columns: int = 50, length: float = 1e-4) -> SaturationGrid:
    z_nodes = np.linspace(0.0, length, columns + 1)
    return SaturationGrid(z_nodes=z_nodes, column=np.arange(columns), core_area=np.full(columns, 3.0e-11),
                          core_flow=5.0e-15, columns=columns)


def test_saturation_stays_at_equilibrium_in_uniform_plasma(default_cfg):
    grid = _uniform_grid()
    a = np.full(grid.columns, 1.3)
    state = advance_saturation(grid, a, 1.3, default_cfg)
    assert np.abs(state.disequilibrium).max() < 1e-9
    assert state.inlet == pytest.approx(hill_equilibrium(1.3))


def test_saturation_falls_toward_lower_plasma_level(default_cfg):
    grid = _uniform_grid()
    a = np.full(grid.columns, 0.8)
    state = advance_saturation(grid, a, 1.3, default_cfg)
    assert np.all(np.diff(state.S) <= 1e-12)
    assert hill_equilibrium(0.8) < state.outlet < state.inlet
    assert np.all(state.rate <= 0.0)


def test_core_boundary_interpolates_radius():
    boundary = CoreBoundary(z=np.array([0.0, 1.0]), radius=np.array([3.0, 2.0]), inlet_gap=1.0, core_flow=1.0)
    assert boundary.radius_at(0.25) == pytest.approx(2.75)
