from __future__ import annotations

import numpy as np
import pytest

from physics.flow import solve_flow
from physics.mesh import build_mesh
from physics.thermal import heated_region_contains_max, solve_heat


@pytest.fixture(scope="module")
def tube(coarse):
    cfg = coarse(rings=0)
    mesh = build_mesh(cfg)
    return cfg, mesh, solve_flow(mesh, cfg)


def _wall_source(mesh, density=1.0e5):
    Q = np.zeros(mesh.shape)
    j = mesh.column_at(0.5 * mesh.z_nodes[-1])
    Q[mesh.n_lumen - 2:mesh.n_lumen, j - 1:j + 2] = density
    return Q


def test_no_source_no_rise(tube):
    cfg, mesh, flow = tube
    temperature = solve_heat(mesh, flow, np.zeros(mesh.shape), cfg)
    assert np.allclose(temperature.dT, 0.0)
    assert temperature.balance.relative_residual == 0.0


def test_heat_budget_closes(tube):
    cfg, mesh, flow = tube
    temperature = solve_heat(mesh, flow, _wall_source(mesh), cfg)
    balance = temperature.balance
    assert balance.source > 0.0
    assert balance.advected > 0.0 and balance.conducted > 0.0
    assert balance.relative_residual < 1e-4


def test_rise_is_positive_and_peaks_at_the_source(tube):
    cfg, mesh, flow = tube
    Q = _wall_source(mesh)
    temperature = solve_heat(mesh, flow, Q, cfg)
    assert temperature.dT.min() >= -1e-12 * temperature.max_rise
    assert heated_region_contains_max(mesh, temperature, Q)
    r, _ = temperature.max_location
    assert abs(r - cfg.vessel_radius) < 1.0e-6


def test_rise_is_linear_in_power(tube):
    cfg, mesh, flow = tube
    Q = _wall_source(mesh)
    single = solve_heat(mesh, flow, Q, cfg)
    triple = solve_heat(mesh, flow, 3.0 * Q, cfg)
    assert np.allclose(triple.dT, 3.0 * single.dT, rtol=1e-8, atol=1e-20)


def test_still_fluid_loses_heat_by_conduction_only(coarse):
    cfg = coarse(rings=0, pressure_gradient=0.0)
    mesh = build_mesh(cfg)
    temperature = solve_heat(mesh, solve_flow(mesh, cfg), _wall_source(mesh), cfg)
    assert temperature.balance.advected == 0.0
    assert temperature.balance.conducted == pytest.approx(temperature.balance.source, rel=1e-6)
