"""Robot power accounting and pump strategies.

Power follows from oxygen uptake: each glucose reaction consumes six oxygen molecules and
releases `tissue.reaction_energy` joules, so P = uptake * e / 6.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Tuple

import numpy as np

from physics.analytic import PICO
from physics.flow import FlowField
from physics.mesh import AxiMesh
from physics.oxygen_transport import (
    ConcentrationField,
    CouplingState,
    RobotDesign,
    solve_coupled,
)
from physics.rbc_kinetics import SaturationState, hill_equilibrium, partial_pressure_ratio
from utils.errors import ConfigError, ConvergenceError
from utils.scenario import PumpMode, ScenarioConfig, derived_quantities

logger = logging.getLogger(__name__)

BOLTZMANN = 1.380649e-23
ATMOSPHERE = 101325.0
BISECTION_STEPS = 60
BRACKET_DOUBLINGS = 12


@dataclass(frozen=True, eq=False)
class PowerReport:
    """Per-ring and per-robot power. Ring 1 is the most upstream ring."""
    design: str
    ring_uptake: np.ndarray  # molecule/s per ring
    ring_power_pW: np.ndarray
    robots_per_ring: int
    parasitic_pW: float  # per robot, pumping cost
    capped_rings: Tuple[int, ...] = ()

    @property
    def per_robot_pW(self) -> np.ndarray:
        return self.ring_power_pW / self.robots_per_ring

    @property
    def aggregate_pW(self) -> float:
        return float(self.ring_power_pW.sum())

    @property
    def mean_robot_pW(self) -> float:
        count = self.ring_power_pW.size * self.robots_per_ring
        return self.aggregate_pW / count if count else 0.0

    @property
    def min_robot_pW(self) -> float:
        return float(self.per_robot_pW.min()) if self.ring_power_pW.size else 0.0

    @property
    def aggregate_uptake(self) -> float:
        return float(self.ring_uptake.sum())

    @property
    def parasitic_fraction(self) -> float:
        return self.parasitic_pW / self.mean_robot_pW if self.mean_robot_pW > 0 else 0.0


def _report_from_uptake(design: str, uptake: np.ndarray, cfg: ScenarioConfig, pumps: bool,
                        capped: Tuple[int, ...] = ()) -> PowerReport:
    uptake = np.asarray(uptake, dtype=float)
    e = cfg.tissue.reaction_energy
    robots = cfg.robot.robots_per_ring
    count = uptake.size * robots
    parasitic = (cfg.robot.pump_energy * uptake.sum() / count * PICO) if pumps and count else 0.0
    return PowerReport(design=design, ring_uptake=uptake, ring_power_pW=uptake * e / 6.0 * PICO,
                       robots_per_ring=robots, parasitic_pW=parasitic, capped_rings=capped)


def power_report(field: ConcentrationField, cfg: ScenarioConfig,
                 coupling: Optional[CouplingState] = None, allow_unconverged: bool = False,
                 design: Optional[RobotDesign] = None) -> PowerReport:
    """Power per ring from face uptake (pumps) or volumetric reaction (no pumps)."""
    if coupling is not None and not coupling.converged and not allow_unconverged:
        raise ConvergenceError("power", coupling.iteration, max(coupling.change_C, coupling.change_S),
                               "refusing to report power from a non-converged transport solve")
    label = (design or RobotDesign.from_config(cfg)).label
    report = _report_from_uptake(label, field.ring_uptake, cfg, field.boundary.pumps, field.capped_rings)
    logger.info("Power (%s): aggregate %.1f pW, mean %.2f pW/robot, min %.2f pW/robot",
                label, report.aggregate_pW, report.mean_robot_pW, report.min_robot_pW)
    return report


# ---------------------------------------------------------------------------
# Pump strategies
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StrategyResult:
    report: PowerReport
    field: ConcentrationField
    saturation: SaturationState
    coupling: CouplingState
    uniform_flux: Optional[float] = None
    phase_reports: Tuple[PowerReport, ...] = ()
    field_phase: Optional[int] = None  # duty phase behind field and saturation; report is the phase average


def _feasible(field: ConcentrationField, c_in: float) -> bool:
    return float(field.face_concentration().min()) >= -1.0e-9 * c_in


def uniform_flux_search(mesh: AxiMesh, flow: FlowField, cfg: ScenarioConfig,
                        design: RobotDesign, reference: Optional[ConcentrationField] = None,
                        on_iteration: Optional[Callable[[CouplingState], None]] = None) -> StrategyResult:
    """Largest uniform face flux that keeps every robot surface at or above zero concentration."""
    if not design.pumps:
        raise ConfigError('robot.pump_mode', PumpMode.UNIFORM_FLUX.value, "uniform flux needs pumps")
    c_in = cfg.oxygen.inlet_concentration

    def probe(flux: float, warm: Optional[ConcentrationField]):
        trial = replace(design, pump_mode=PumpMode.UNIFORM_FLUX, uniform_flux=flux)
        return solve_coupled(mesh, flow, cfg, trial, on_iteration=on_iteration, initial=warm)

    if reference is None:
        reference, _, _ = solve_coupled(mesh, flow, cfg, replace(design, pump_mode=PumpMode.FULL_ABSORB),
                                        on_iteration=on_iteration)
    area = float(reference.faces.area.sum())
    hi = 2.0 * reference.robot_uptake / area if area > 0 else 0.0
    if not hi > 0:
        raise ConvergenceError("uniform_flux", 0, 0.0, "full-absorb reference takes up no oxygen")

    best = probe(0.0, reference)
    lo = 0.0
    for _ in range(BRACKET_DOUBLINGS):
        result = probe(hi, best[0])
        if not _feasible(result[0], c_in):
            break
        lo, best = hi, result
        hi *= 2.0
    else:
        raise ConvergenceError("uniform_flux", BRACKET_DOUBLINGS, hi, "could not bracket the feasible flux")

    steps = 0
    while (hi - lo) > cfg.solver.bisection_tolerance * hi and steps < BISECTION_STEPS:
        mid = 0.5 * (lo + hi)
        result = probe(mid, best[0])
        feasible = _feasible(result[0], c_in)
        logger.debug("Flux probe %.4e: min face C %.3e (%s)", mid,
                     float(result[0].face_concentration().min()), "ok" if feasible else "negative")
        if feasible:
            lo, best = mid, result
        else:
            hi = mid
        steps += 1

    field, saturation, coupling = best
    report = power_report(field, cfg, coupling, allow_unconverged=True, design=design)
    logger.info("Uniform flux %.4e molecule/m^2/s after %d probes", lo, steps)
    return StrategyResult(report=report, field=field, saturation=saturation, coupling=coupling,
                          uniform_flux=lo)


def duty_cycle_average(mesh: AxiMesh, flow: FlowField, cfg: ScenarioConfig, design: RobotDesign,
                       on_iteration: Optional[Callable[[CouplingState], None]] = None) -> StrategyResult:
    """Time average of two counter-phased half-duty states (odd rings on, then even rings on).

    Valid when the duty period is much longer than the ~0.1 ms local diffusion time and much
    shorter than the ~100 ms cell transit past the aggregate.
    """
    if not design.pumps:
        raise ConfigError('robot.pump_mode', PumpMode.DUTY_CYCLE.value, "duty cycling needs pumps")
    states = []
    for phase in (0, 1):
        phased = replace(design, pump_mode=PumpMode.DUTY_CYCLE, duty_cycle_phase=phase)
        states.append(solve_coupled(mesh, flow, cfg, phased, on_iteration=on_iteration))

    reports = tuple(power_report(f, cfg, c, allow_unconverged=True, design=design) for f, _, c in states)
    uptake = 0.5 * (reports[0].ring_uptake + reports[1].ring_uptake)
    capped = tuple(sorted(set(reports[0].capped_rings) | set(reports[1].capped_rings)))
    field, saturation, first = states[0]
    coupling = replace(first, converged=all(c.converged for _, _, c in states))
    report = _report_from_uptake(design.label, uptake, cfg, pumps=True, capped=capped)
    return StrategyResult(report=report, field=field, saturation=saturation, coupling=coupling,
                          phase_reports=reports, field_phase=0)


# ---------------------------------------------------------------------------
# Profiles and estimates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RingProfile:
    index: Tuple[int, ...]
    per_robot_pW: Tuple[float, ...]

    @property
    def upstream_is_max(self) -> bool:
        return len(self.per_robot_pW) < 2 or self.per_robot_pW[0] == max(self.per_robot_pW)

    @property
    def interior_minimum(self) -> Optional[int]:
        """1-based ring index of the smallest interior ring power."""
        interior = self.per_robot_pW[1:-1]
        if not interior:
            return None
        return int(np.argmin(interior)) + 2

    @property
    def downstream_recovers(self) -> bool:
        """Last ring above the interior minimum (power does not fall monotonically)."""
        k = self.interior_minimum
        return k is None or self.per_robot_pW[-1] > self.per_robot_pW[k - 1]

    @property
    def has_edge_effects(self) -> bool:
        return self.upstream_is_max and self.downstream_recovers


def ring_position_profile(report: PowerReport) -> RingProfile:
    values = tuple(float(v) for v in report.per_robot_pW)
    profile = RingProfile(index=tuple(range(1, len(values) + 1)), per_robot_pW=values)
    if len(values) > 2 and not profile.has_edge_effects:
        logger.warning("Ring profile lacks the expected edge effects: %s",
                       ", ".join(f"{v:.1f}" for v in values))
    return profile


@dataclass(frozen=True)
class BurstEstimate:
    stored_total: float  # molecules in all robots
    stored_per_robot: float
    burst_seconds: float  # per robot at full reaction capacity
    burst_power_pW: float
    refill_seconds: float  # at the steady per-robot uptake
    vessel_supply: float  # molecule/s entering the vessel (plasma + cell bound)
    supply_seconds: float  # how long the stores could stand in for the vessel supply


def burst_storage_estimate(cfg: ScenarioConfig, uptake: float, store_fraction: float = 0.1,
                           pressure_atm: float = 1000.0, robots: Optional[int] = None) -> BurstEstimate:
    """Compressed-oxygen storage in a fraction of each robot's volume (ideal gas at body temperature).

    `uptake` is the steady aggregate uptake in molecule/s.
    """
    if store_fraction < 0 or pressure_atm < 0 or uptake < 0:
        raise ConfigError('burst', (store_fraction, pressure_atm, uptake), "inputs must be non-negative")
    derived = derived_quantities(cfg)
    robots = robots if robots is not None else cfg.robot.ring_count * cfg.robot.robots_per_ring
    temperature = cfg.fluid.ambient_temperature
    per_robot = pressure_atm * ATMOSPHERE * store_fraction * derived.robot_volume / (BOLTZMANN * temperature)

    supply = derived.volumetric_flow * (
        cfg.hematocrit * cfg.rbc.c_max * _inlet_saturation(cfg) + cfg.oxygen.inlet_concentration)
    total = per_robot * robots
    per_robot_uptake = uptake / robots if robots else 0.0
    return BurstEstimate(
        stored_total=total,
        stored_per_robot=per_robot,
        burst_seconds=per_robot / derived.max_robot_uptake,
        burst_power_pW=derived.max_robot_power * PICO,
        refill_seconds=per_robot / per_robot_uptake if per_robot_uptake > 0 else math.inf,
        vessel_supply=supply,
        supply_seconds=total / supply if supply > 0 else math.inf,
    )


def _inlet_saturation(cfg: ScenarioConfig) -> float:
    return float(hill_equilibrium(partial_pressure_ratio(cfg.oxygen.inlet_concentration, cfg), cfg.rbc.hill_n))

