"""Numerical kernels for the capillary robot power simulator."""

from .mesh import AxiMesh, BoundaryTag, CoreBoundary, Region, build_mesh
from .flow import FlowField, WallForce, solve_flow, wall_force, trace_core_boundary, core_hematocrit
from .rbc_kinetics import (
    SaturationState, hill_equilibrium, partial_pressure_ratio, unloading_function,
    unloading_rate, advance_saturation,
)
from .oxygen_transport import (
    ConcentrationField, CouplingState, BalanceReport, RobotDesign,
    assemble_sources, robot_boundary_condition, solve_coupled, species_balance_audit,
)
from .robot_power import (
    PowerReport, StrategyResult, power_report, uniform_flux_search, duty_cycle_average,
    ring_position_profile, burst_storage_estimate,
)
from .thermal import TemperatureField, solve_heat
from .analytic import sphere_absorption_power, f_mu, shell_benefit, krogh_profile, poiseuille

__all__ = [
    'AxiMesh', 'BoundaryTag', 'CoreBoundary', 'Region', 'build_mesh',
    'FlowField', 'WallForce', 'solve_flow', 'wall_force', 'trace_core_boundary', 'core_hematocrit',
    'SaturationState', 'hill_equilibrium', 'partial_pressure_ratio', 'unloading_function',
    'unloading_rate', 'advance_saturation',
    'ConcentrationField', 'CouplingState', 'BalanceReport', 'RobotDesign',
    'assemble_sources', 'robot_boundary_condition', 'solve_coupled', 'species_balance_audit',
    'PowerReport', 'StrategyResult', 'power_report', 'uniform_flux_search', 'duty_cycle_average',
    'ring_position_profile', 'burst_storage_estimate',
    'TemperatureField', 'solve_heat',
    'sphere_absorption_power', 'f_mu', 'shell_benefit', 'krogh_profile', 'poiseuille',
]
