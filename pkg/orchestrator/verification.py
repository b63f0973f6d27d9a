"""Acceptance suite: analytic oracles, flow checks and full coupled reproductions.

Levels are cumulative: `analytic` runs in well under a second, `flow` adds Stokes solves,
`full` adds the coupled oxygen runs and the design matrix.
"""

import asyncio
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .orchestrator import CellResult, design_matrix_cells, run_matrix, run_pipeline
from physics.analytic import (
    PICO,
    SphereModel,
    f_mu,
    krogh_profile,
    krogh_wall_flux,
    krogh_zero_crossing,
    poiseuille,
    pump_benefit,
    radial_sphere_uptake,
    shell_benefit_optimum,
    sphere_absorption_power,
    sphere_radius,
    thin_shell_benefit,
)
from physics.flow import solve_flow, wall_force
from physics.mesh import build_mesh
from physics.oxygen_transport import RobotDesign, wall_concentration
from physics.rbc_kinetics import hill_equilibrium, unloading_function, unloading_rate
from physics.thermal import solve_heat
from utils.errors import ConfigError, SimulationError
from utils.scenario import PRESETS, PumpMode, ScenarioConfig, apply_overrides, derived_quantities, with_capacity

logger = logging.getLogger(__name__)

LEVELS = ('analytic', 'flow', 'full')


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: Optional[float] = None
    expected: Optional[float] = None
    tolerance: str = ""
    detail: str = ""

    def to_dict(self) -> Dict:
        return {
            'name': self.name, 'passed': self.passed, 'value': self.value,
            'expected': self.expected, 'tolerance': self.tolerance, 'detail': self.detail,
        }


@dataclass
class VerificationReport:
    level: str
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> Dict:
        return {
            'level': self.level,
            'passed': self.passed,
            'checks': [c.to_dict() for c in self.checks],
        }


def check_close(name: str, value: float, expected: float, rel_tol: float, detail: str = "") -> CheckResult:
    ok = math.isfinite(value) and abs(value - expected) <= rel_tol * abs(expected)
    return CheckResult(name, ok, value, expected, f"±{rel_tol:.1%}", detail)


def check_abs(name: str, value: float, expected: float, abs_tol: float, detail: str = "") -> CheckResult:
    ok = math.isfinite(value) and abs(value - expected) <= abs_tol
    return CheckResult(name, ok, value, expected, f"±{abs_tol:g}", detail)


def check_true(name: str, condition: bool, value: Optional[float] = None, detail: str = "") -> CheckResult:
    return CheckResult(name, bool(condition), value, None, "", detail)


def _guarded(report: VerificationReport, group: str, checks: Callable[[], List[CheckResult]]):
    """Run a group of checks; a simulation failure becomes a failed entry."""
    try:
        report.checks.extend(checks())
    except ConfigError:
        raise
    except SimulationError as e:
        logger.error("Verification group %s failed: %s", group, e)
        report.checks.append(CheckResult(group, False, detail=str(e)))


# ---------------------------------------------------------------------------
# Analytic level
# ---------------------------------------------------------------------------

def sphere_checks(cfg: ScenarioConfig) -> List[CheckResult]:
    a = sphere_radius(derived_quantities(cfg).robot_volume)
    checks = [
        check_close("sphere power at C=3e22 (pW)", sphere_absorption_power(a, 3.0e22, cfg) * PICO, 320.0, 0.02),
        check_close("sphere power at C=7e22 (pW)", sphere_absorption_power(a, 7.0e22, cfg) * PICO, 750.0, 0.02),
    ]

    high = SphereModel.from_config(with_capacity(cfg, 'high'), 3.0e22)
    low_cfg = with_capacity(cfg, 'low')
    low = SphereModel.from_config(low_cfg, 3.0e22)
    high_benefit = pump_benefit(high, derived_quantities(with_capacity(cfg, 'high')).max_robot_uptake)
    low_benefit = pump_benefit(low, derived_quantities(low_cfg).max_robot_uptake)
    checks += [
        check_close("pump benefit, high capacity", high_benefit.uncapped, 2.0, 0.05),
        check_close("pump benefit, low capacity", low_benefit.uncapped, 42.0, 0.05),
        check_close("capped pump benefit, low capacity at C=3e22", low_benefit.capped, 34.0, 0.05),
    ]

    ratio, best = shell_benefit_optimum()
    checks += [
        check_abs("thin-shell optimum benefit (%)", 100.0 * (best - 1.0), 12.0, 3.0),
        check_abs("thin-shell optimum a/mu", ratio, 3.5, 0.5),
        check_abs("thin-shell benefit, high capacity (%)", 100.0 * (thin_shell_benefit(high.ratio) - 1.0), 10.0, 3.0),
        check_true("thin-shell benefit, low capacity below 1%", thin_shell_benefit(low.ratio) - 1.0 < 0.01,
                   100.0 * (thin_shell_benefit(low.ratio) - 1.0)),
    ]

    for sphere, label in ((high, "high"), (low, "low")):
        numeric = radial_sphere_uptake(sphere.radius, sphere.mu)
        checks.append(check_close(f"radial solver vs f_mu, {label} capacity", numeric,
                                  f_mu(sphere.radius, sphere.mu), 0.005))
    return checks


def poiseuille_checks(cfg: ScenarioConfig) -> List[CheckResult]:
    checks = []
    for dP, expected in ((1.0e5, 0.2), (5.0e5, 1.0)):
        tube = poiseuille(apply_overrides(cfg, {'pressure_gradient': dP}))
        checks.append(check_close(f"Poiseuille mean speed at dP={dP:.0e} (mm/s)",
                                  tube.mean_velocity * 1e3, expected, 0.005))
    return checks


def kinetics_checks(cfg: ScenarioConfig) -> List[CheckResult]:
    n = cfg.rbc.hill_n
    a = np.linspace(0.05, 4.0, 100)
    on_curve = np.abs(unloading_function(a, hill_equilibrium(a, n), n)).max()

    grid_a, grid_S = np.meshgrid(np.linspace(0.1, 3.0, 30), np.linspace(0.05, 0.95, 19))
    gap = hill_equilibrium(grid_a, n) - grid_S
    away = np.abs(gap) > 1e-3
    rate = unloading_rate(grid_a, grid_S, n, cfg.rbc.unloading_time)
    signs = np.all(np.sign(rate[away]) == np.sign(gap[away]))
    return [
        check_true("unloading function vanishes on the Hill curve", on_curve < 1e-9, float(on_curve)),
        check_true("unloading rate drives S toward equilibrium", bool(signs)),
        check_abs("Hill S_eq(1)", float(hill_equilibrium(1.0, n)), 0.5, 1e-12),
        check_abs("Hill S_eq(0)", float(hill_equilibrium(0.0, n)), 0.0, 1e-12),
    ]


def krogh_checks(cfg: ScenarioConfig) -> List[CheckResult]:
    checks = []
    for name, overrides in PRESETS.items():
        preset = apply_overrides(cfg, overrides)
        influx, consumption = krogh_wall_flux(preset)
        checks.append(check_close(f"Krogh flux balance, {name}", influx, consumption, 1e-6))
    r = np.linspace(cfg.vessel_radius, cfg.tissue_radius, 50)
    flat = krogh_profile(r, cfg, 5.0e22, power_density=0.0)
    checks.append(check_true("Krogh profile without consumption is flat", np.allclose(flat, 5.0e22)))
    return checks


# ---------------------------------------------------------------------------
# Flow level
# ---------------------------------------------------------------------------

def _robot_free(cfg: ScenarioConfig) -> ScenarioConfig:
    return apply_overrides(cfg, {'robot.ring_count': 0, 'robot.ring_positions': (), 'mesh.face_spacing': None})


def _with_rings(cfg: ScenarioConfig, rings: int) -> ScenarioConfig:
    return apply_overrides(cfg, {'robot.ring_count': rings, 'robot.ring_positions': (), 'mesh.face_spacing': None})


def tube_profile_checks(cfg: ScenarioConfig) -> List[CheckResult]:
    tube_cfg = _robot_free(cfg)
    mesh = build_mesh(tube_cfg)
    flow = solve_flow(mesh, tube_cfg)
    j = mesh.nz // 2
    r = mesh.rc[:mesh.n_lumen]
    area = mesh.axial_area[:mesh.n_lumen]
    v = 0.5 * (flow.vz[:, j] + flow.vz[:, j + 1])
    exact = poiseuille(tube_cfg).velocity(r)
    error = math.sqrt(np.sum((v - exact) ** 2 * area) / np.sum(exact ** 2 * area))
    return [check_true("Stokes solver matches the Poiseuille profile (L2)", error < 0.005, error)]


def wall_force_checks(cfg: ScenarioConfig) -> List[CheckResult]:
    checks = []
    for rings, reduction, coefficient in ((1, 0.06, 5.02e-16), (10, 0.20, 1.56e-15)):
        ring_cfg = _with_rings(cfg, rings)
        mesh = build_mesh(ring_cfg)
        context = run_pipeline(ring_cfg, RobotDesign.from_config(ring_cfg), stop_after='flow')
        checks.append(check_abs(f"flow reduction, {rings} ring(s)", 1.0 - context.flow_reduction, reduction, 0.02))
        checks.append(check_close(f"wall force coefficient, {rings} ring(s) (m^3)",
                                  context.force.coefficient, coefficient, 0.10))

        other = apply_overrides(ring_cfg, {'pressure_gradient': 5.0 * ring_cfg.pressure_gradient})
        scaled = wall_force(solve_flow(mesh, other), mesh, other)
        linear = abs(scaled.coefficient - context.force.coefficient) / abs(context.force.coefficient)
        checks.append(check_true(f"wall force linear in dP, {rings} ring(s)", linear < 1e-3, linear))
    return checks


def hematocrit_checks(cfg: ScenarioConfig) -> List[CheckResult]:
    checks = []
    for dP, expected in ((1.0e5, 0.31), (5.0e5, 0.36)):
        tube_cfg = apply_overrides(_robot_free(cfg), {'pressure_gradient': dP})
        context = run_pipeline(tube_cfg, RobotDesign.from_config(tube_cfg), stop_after='flow')
        checks.append(check_abs(f"core hematocrit at dP={dP:.0e}", context.hematocrit.mean, expected, 0.02))
    return checks


# ---------------------------------------------------------------------------
# Full level
# ---------------------------------------------------------------------------

def _scenario(cfg: ScenarioConfig, preset: str, rings: int) -> ScenarioConfig:
    overrides = dict(PRESETS[preset])
    overrides['name'] = preset
    return _with_rings(apply_overrides(cfg, overrides), rings)


def scenario_checks(cfg: ScenarioConfig) -> List[CheckResult]:
    """Per-ring profile, uptake, heating and conservation in both named scenarios."""
    checks = []
    for preset in PRESETS:
        scenario = _scenario(cfg, preset, 10)
        for design in (RobotDesign(pumps=True, capacity='high'), RobotDesign(pumps=False, capacity='high')):
            context = run_pipeline(scenario, design)
            tag = f"{preset}, 10-ring {design.label}"
            checks.append(check_true(f"ring profile edge effects, {tag}", context.ring_profile.has_edge_effects,
                                     detail=", ".join(f"{p:.1f}" for p in context.ring_profile.per_robot_pW)))
            checks.append(check_true(f"oxygen balance below 1%, {tag}",
                                     context.balance.relative_residual < 0.01, context.balance.relative_residual))
            checks.append(check_true(f"heat balance below 1%, {tag}",
                                     context.temperature.balance.relative_residual < 0.01,
                                     context.temperature.balance.relative_residual))
            if not design.pumps:
                continue
            checks.append(check_close(f"aggregate uptake, {tag} (molecule/s)",
                                      context.power.aggregate_uptake, 5.0e9, 0.25))
            rise = context.temperature.max_rise
            checks.append(CheckResult(f"max temperature rise, {tag} (K)", 3e-5 <= rise <= 3e-4, rise, 1e-4,
                                      "3e-5 to 3e-4"))
            doubled = solve_heat(context.mesh, context.flow, 2.0 * context.power_density, context.cfg)
            linear = abs(doubled.max_rise / (2.0 * rise) - 1.0) if rise > 0 else math.inf
            checks.append(check_true(f"temperature rise linear in power, {tag}", linear < 1e-3, linear))
            if preset == 'low_demand':
                S = context.saturation.outlet
                checks.append(check_abs(f"outlet saturation, {tag}", S, 0.6, 0.05))
                checks.append(check_true(f"outlet saturation below venous equilibrium, {tag}", S < 0.7, S))
    return checks


def krogh_pde_checks(cfg: ScenarioConfig) -> List[CheckResult]:
    checks = []
    low = run_pipeline(_scenario(cfg, 'low_demand', 0), RobotDesign(pumps=False))
    checks.append(check_true("Krogh vs full solve within 5%, low demand", low.krogh.max_deviation < 0.05,
                             low.krogh.max_deviation))
    diseq = float(np.abs(low.saturation.disequilibrium).max())
    checks.append(check_true("robot-free saturation stays at equilibrium, low demand", diseq < 1e-3, diseq))

    high = run_pipeline(_scenario(cfg, 'high_demand', 0), RobotDesign(pumps=False))
    mesh = high.concentration.mesh
    j = mesh.column_at(mesh.mid_aggregate_z())
    crossing = krogh_zero_crossing(high.cfg, wall_concentration(high.concentration, j))
    distance = (crossing - high.cfg.vessel_radius) * 1e6 if crossing is not None else math.inf
    checks.append(check_abs("Krogh zero crossing from the wall, high demand (um)", distance, 10.0, 2.0))
    return checks


def strategy_checks(cfg: ScenarioConfig) -> List[CheckResult]:
    scenario = _scenario(cfg, 'low_demand', 10)
    uniform = run_pipeline(scenario, RobotDesign(pumps=True, capacity='high', pump_mode=PumpMode.UNIFORM_FLUX))
    duty = run_pipeline(scenario, RobotDesign(pumps=True, capacity='high', pump_mode=PumpMode.DUTY_CYCLE))
    checks = [check_close("uniform flux (molecule/m^2/s)", uniform.strategy.uniform_flux, 2.22e19, 0.20)]
    for name, context, expected, direction in (("uniform flux", uniform, 0.84, 1), ("duty cycle", duty, 0.79, -1)):
        fraction = context.power.aggregate_pW / context.baseline_power.aggregate_pW
        checks.append(check_abs(f"{name} aggregate vs full absorb", fraction, expected, 0.05))
        change = context.power.min_robot_pW - context.baseline_power.min_robot_pW
        verb = "raises" if direction > 0 else "lowers"
        checks.append(check_true(f"{name} {verb} the minimum robot power", direction * change > 0, change))
    return checks


def matrix_orderings(results: Sequence[CellResult]) -> List[str]:
    """Qualitative orderings the design matrix must show; returns violations."""
    power: Dict[tuple, float] = {
        (r.cell.rings, r.cell.pumps, r.cell.capacity, r.cell.c_in, r.cell.pressure_gradient, r.cell.demand): r.power_pW
        for r in results if math.isfinite(r.power_pW)
    }
    violations = []

    def compare(lower: tuple, higher: tuple, strict: bool, what: str):
        if lower in power and higher in power:
            lo, hi = power[lower], power[higher]
            if hi < lo or (strict and hi == lo):
                violations.append(f"{what}: {higher} gives {hi:.2f} pW vs {lo:.2f} pW at {lower}")

    for rings, pumps, capacity, c_in, dP, demand in list(power):
        key = (rings, pumps, capacity, c_in, dP, demand)
        if pumps:
            compare((rings, False, capacity, c_in, dP, demand), key, False, "pumps >= no pumps")
        if capacity == 'high':
            compare((rings, pumps, 'low', c_in, dP, demand), key, False, "high >= low capacity")
        if rings == 1:
            compare((10, pumps, capacity, c_in, dP, demand), key, True, "1 ring > 10 rings per robot")
        if c_in > 3.0e22:
            compare((rings, pumps, capacity, 3.0e22, dP, demand), key, True, "power rises with C_in")
        if dP > 1.0e5:
            compare((rings, pumps, capacity, c_in, 1.0e5, demand), key, True, "power rises with dP")
        if demand < 6.0e4:
            compare((rings, pumps, capacity, c_in, dP, 6.0e4), key, True, "power falls with tissue demand")
    return violations


def matrix_checks(cfg: ScenarioConfig, workers: int = 1, refinement: bool = False) -> List[CheckResult]:
    results = asyncio.run(run_matrix(cfg, design_matrix_cells(), workers=workers))
    checks = []
    for result in results:
        cell = result.cell
        checks.append(CheckResult(
            f"design matrix: {cell.label}",
            result.converged and not result.error and abs(result.relative_error) <= 0.25,
            result.power_pW, cell.reference_pW, "±25%", result.error,
        ))
    violations = matrix_orderings(results)
    checks.append(check_true("design matrix orderings", not violations, float(len(violations)), "; ".join(violations)))

    if refinement:
        scenario_cells = [c for c in design_matrix_cells() if c.scenario_cell]
        refined = asyncio.run(run_matrix(cfg, scenario_cells, workers=workers, refine=True))
        coarse = {r.cell: r for r in results}
        for result in refined:
            base = coarse[result.cell].power_pW
            change = abs(result.power_pW - base) / base if base else math.inf
            checks.append(check_true(f"mesh refinement: {result.cell.label}", change < 0.03, change))
    return checks


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def verify(cfg: ScenarioConfig, level: str = 'analytic', workers: int = 1,
           refinement: bool = False) -> VerificationReport:
    """Run every check up to `level`; failures are report entries, not exceptions."""
    if level not in LEVELS:
        raise ConfigError('level', level, f"expected one of {', '.join(LEVELS)}")
    report = VerificationReport(level=level)
    depth = LEVELS.index(level)

    _guarded(report, "sphere", lambda: sphere_checks(cfg))
    _guarded(report, "poiseuille", lambda: poiseuille_checks(cfg))
    _guarded(report, "kinetics", lambda: kinetics_checks(cfg))
    _guarded(report, "krogh", lambda: krogh_checks(cfg))
    if depth >= 1:
        _guarded(report, "tube profile", lambda: tube_profile_checks(cfg))
        _guarded(report, "wall force", lambda: wall_force_checks(cfg))
        _guarded(report, "hematocrit", lambda: hematocrit_checks(cfg))
    if depth >= 2:
        _guarded(report, "scenarios", lambda: scenario_checks(cfg))
        _guarded(report, "krogh full", lambda: krogh_pde_checks(cfg))
        _guarded(report, "pump strategies", lambda: strategy_checks(cfg))
        _guarded(report, "design matrix", lambda: matrix_checks(cfg, workers, refinement))

    logger.info("Verification (%s): %d/%d checks passed", level,
                len(report.checks) - len(report.failures), len(report.checks))
    return report
