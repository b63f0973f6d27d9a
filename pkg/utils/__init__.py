"""Utilities package for the capillary power simulator."""

from .errors import SimulationError, ConfigError, MeshError, ConvergenceError, StageError
from .scenario import ScenarioConfig, DerivedParams, PRESETS, load_scenario, dump_scenario, derived_quantities
from .report import generate_summary

__all__ = [
    'SimulationError', 'ConfigError', 'MeshError', 'ConvergenceError', 'StageError',
    'ScenarioConfig', 'DerivedParams', 'PRESETS', 'load_scenario', 'dump_scenario', 'derived_quantities',
    'generate_summary',
]
