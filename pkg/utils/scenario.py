"""Scenario configuration: parameters, presets, parsing and derived quantities.

All quantities are SI; concentrations are molecules per cubic metre.
"""

import logging
import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Union, get_args, get_origin, get_type_hints

from utils.errors import ConfigError

logger = logging.getLogger(__name__)

# Cell-free gap observations used to interpolate the inlet gap: (mean speed m/s, gap / radius).
GAP_SPEED_POINTS = ((2.0e-4, 0.98e-6 / 4.0e-6), (1.0e-3, 1.27e-6 / 4.0e-6))
GAP_FRACTION_LIMITS = (0.05, 0.45)


class PumpMode(Enum):
    """How robots with pumps take up oxygen at their plasma-facing surface."""
    FULL_ABSORB = "full_absorb"
    UNIFORM_FLUX = "uniform_flux"
    DUTY_CYCLE = "duty_cycle"


class SaturationAverage(Enum):
    """Where the plasma partial pressure driving cell unloading is sampled."""
    INTERFACE = "interface"
    CROSS_SECTION = "cross_section"


@dataclass(frozen=True)
class FluidParams:
    density: float = 1.0e3
    viscosity: float = 1.0e-3
    heat_capacity: float = 4200.0
    thermal_conductivity: float = 0.6
    ambient_temperature: float = 310.0


@dataclass(frozen=True)
class OxygenParams:
    diffusivity: float = 2.0e-9
    inlet_concentration: float = 7.0e22
    henry_ratio: float = 1.6e-19
    core_diffusivity: Optional[float] = None  # None: same as plasma
    robot_diffusivity: Optional[float] = None  # None: same as plasma


@dataclass(frozen=True)
class RbcParams:
    p_half: float = 3500.0
    hill_n: float = 2.7
    unloading_time: float = 0.076
    c_max: float = 1.0e25
    heme_diffusivity: float = 1.4e-11
    inlet_gap: Optional[float] = None  # None: from the gap-speed relation
    narrow_gap: Optional[float] = None  # gap expected over the robots
    saturation_average: SaturationAverage = SaturationAverage.INTERFACE


@dataclass(frozen=True)
class TissueParams:
    max_power_density: float = 4.0e3
    half_saturation: float = 1.0e21
    reaction_energy: float = 4.0e-18


@dataclass(frozen=True)
class RobotParams:
    size: float = 1.0e-6
    robots_per_ring: int = 20
    ring_count: int = 10
    volume: Optional[float] = None  # None: annular segment volume
    site_density: float = 3.0e21
    site_rate: float = 1.0e6
    half_saturation: float = 1.0e24
    pumps: bool = True
    pump_mode: PumpMode = PumpMode.FULL_ABSORB
    capacity_limited: bool = True
    shell_fraction: float = 0.0
    uniform_flux: Optional[float] = None  # None: search for the largest feasible flux
    ring_positions: Tuple[float, ...] = ()  # upstream edges; empty: centred ringset
    pump_energy: float = 1.0e-20


@dataclass(frozen=True)
class MeshParams:
    face_spacing: Optional[float] = None  # None: 0.1 um for ringsets, 0.01 um for one ring
    wall_spacing: float = 1.0e-7
    growth: float = 1.15
    max_radial_spacing: float = 2.5e-7
    max_axial_spacing: float = 1.0e-6
    max_tissue_spacing: float = 2.0e-6
    max_cells: int = 80000
    saturation_points: int = 900


@dataclass(frozen=True)
class SolverParams:
    relaxation: float = 0.5
    tolerance: float = 1.0e-6
    max_iterations: int = 200
    convection_blend: float = 1.0
    flow_tolerance: float = 1.0e-8
    bisection_tolerance: float = 1.0e-3
    balance_tolerance: float = 1.0e-2


@dataclass(frozen=True)
class ScenarioConfig:
    """Every physical and numerical parameter of a run. Immutable once validated."""
    name: str = "custom"
    vessel_radius: float = 4.0e-6
    tissue_radius: float = 4.0e-5
    vessel_length: float = 1.0e-4
    pressure_gradient: float = 1.0e5
    hematocrit: float = 0.25
    fluid: FluidParams = field(default_factory=FluidParams)
    oxygen: OxygenParams = field(default_factory=OxygenParams)
    rbc: RbcParams = field(default_factory=RbcParams)
    tissue: TissueParams = field(default_factory=TissueParams)
    robot: RobotParams = field(default_factory=RobotParams)
    mesh: MeshParams = field(default_factory=MeshParams)
    solver: SolverParams = field(default_factory=SolverParams)

    @property
    def core_diffusivity(self) -> float:
        return self.oxygen.core_diffusivity or self.oxygen.diffusivity

    @property
    def robot_diffusivity(self) -> float:
        return self.oxygen.robot_diffusivity or self.oxygen.diffusivity


GROUPS = {
    'fluid': FluidParams,
    'oxygen': OxygenParams,
    'rbc': RbcParams,
    'tissue': TissueParams,
    'robot': RobotParams,
    'mesh': MeshParams,
    'solver': SolverParams,
}

PRESETS: Dict[str, Dict[str, object]] = {
    # basal tissue demand
    'low_demand': {
        'pressure_gradient': 1.0e5,
        'tissue.max_power_density': 4.0e3,
        'oxygen.inlet_concentration': 7.0e22,
    },
    # active tissue, faster flow
    'high_demand': {
        'pressure_gradient': 5.0e5,
        'tissue.max_power_density': 6.0e4,
        'oxygen.inlet_concentration': 7.0e22,
    },
}

CAPACITY_SITE_DENSITY = {'high': 3.0e21, 'low': 6.0e19}


@dataclass(frozen=True)
class DerivedParams:
    """Quantities computed from a validated config."""
    mean_velocity: float
    volumetric_flow: float
    reynolds: float
    robot_volume: float
    site_count: float
    site_power: float
    max_robot_power: float
    max_robot_uptake: float
    reaction_rate: float
    reaction_length: float
    inlet_gap: float
    narrow_gap: float
    diffusion_length: float
    face_spacing: float
    ring_starts: Tuple[float, ...]


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def parse_config(text: str) -> Dict[str, str]:
    """Parse `key = value` lines; `#` starts a comment."""
    config = {}
    for line in text.splitlines():
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(line, None, "expected 'key = value'")
        key, value = line.split('=', 1)
        config[key.strip()] = value.strip()
    return config


def _coerce(key: str, raw, hint):
    """Convert a raw config value to the annotated field type."""
    if not isinstance(raw, str):
        if isinstance(raw, list):
            raw = tuple(raw)
        return raw

    origin = get_origin(hint)
    args = get_args(hint)
    try:
        if origin is Union and type(None) in args:
            if raw.strip().lower() in ('', 'none', 'auto'):
                return None
            inner = next(a for a in args if a is not type(None))
            return _coerce(key, raw, inner)
        if origin in (tuple, Tuple):
            return tuple(float(x) for x in raw.split(',') if x.strip())
        if hint is bool:
            lowered = raw.strip().lower()
            if lowered in ('true', 'yes', 'on', '1'):
                return True
            if lowered in ('false', 'no', 'off', '0'):
                return False
            raise ValueError("not a boolean")
        if hint is int:
            number = float(raw)
            if not number.is_integer():
                raise ValueError("not an integer")
            return int(number)
        if hint is float:
            return float(raw)
        if isinstance(hint, type) and issubclass(hint, Enum):
            return hint(raw.strip())
        return raw.strip()
    except (ValueError, StopIteration) as e:
        raise ConfigError(key, raw, f"cannot parse value ({e})")


def scenario_from_mapping(values: Mapping[str, object]) -> ScenarioConfig:
    """Build and validate a config from flat keys, applying `preset` first."""
    values = dict(values)
    if not values:
        raise ConfigError('<document>', '', "empty scenario document")

    merged: Dict[str, object] = {}
    preset = values.pop('preset', None)
    if preset:
        if preset not in PRESETS:
            raise ConfigError('preset', preset, f"unknown preset; choose from {', '.join(PRESETS)}")
        merged.update(PRESETS[preset])
        merged['name'] = preset
    merged.update(values)

    top_hints = get_type_hints(ScenarioConfig)
    top_kwargs = {}
    group_kwargs: Dict[str, Dict[str, object]] = {group: {} for group in GROUPS}

    for key, raw in merged.items():
        if '.' in key:
            group, name = key.split('.', 1)
            cls = GROUPS.get(group)
            hints = get_type_hints(cls) if cls else {}
            if name not in hints:
                raise ConfigError(key, raw, "unknown key")
            group_kwargs[group][name] = _coerce(key, raw, hints[name])
        else:
            if key not in top_hints or key in GROUPS:
                raise ConfigError(key, raw, "unknown key")
            top_kwargs[key] = _coerce(key, raw, top_hints[key])

    cfg = ScenarioConfig(
        **top_kwargs,
        **{group: GROUPS[group](**kwargs) for group, kwargs in group_kwargs.items()},
    )
    validate_scenario(cfg)
    return cfg


def load_scenario(source: Union[str, Path], overrides: Optional[Mapping[str, object]] = None) -> ScenarioConfig:
    """Load a scenario from document text, a file path, or a preset name."""
    if isinstance(source, Path) or (isinstance(source, str) and '=' not in source and Path(source).is_file()):
        logger.debug("Loading scenario file %s", source)
        text = Path(source).read_text(encoding='utf-8')
    elif isinstance(source, str) and source in PRESETS:
        text = f"preset = {source}"
    else:
        text = str(source)

    values: Dict[str, object] = dict(parse_config(text))
    if not values:
        raise ConfigError('<document>', '', "empty scenario document")
    values.update(overrides or {})
    return scenario_from_mapping(values)


def flatten_scenario(cfg: ScenarioConfig) -> Dict[str, object]:
    """Flat `key -> value` view of a config (inverse of scenario_from_mapping)."""
    flat: Dict[str, object] = {}
    for f in fields(ScenarioConfig):
        value = getattr(cfg, f.name)
        if f.name in GROUPS:
            for sub in fields(value):
                flat[f"{f.name}.{sub.name}"] = getattr(value, sub.name)
        else:
            flat[f.name] = value
    return flat


def _format_value(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_scenario(cfg: ScenarioConfig) -> str:
    """Serialize every field; floats use repr() so reloading is bit-exact."""
    lines = [f"# scenario {cfg.name}"]
    for key, value in flatten_scenario(cfg).items():
        lines.append(f"{key} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


def apply_overrides(cfg: ScenarioConfig, overrides: Mapping[str, object]) -> ScenarioConfig:
    """Return a new validated config with some flat keys replaced."""
    values = flatten_scenario(cfg)
    for key in overrides:
        if key not in values:
            raise ConfigError(key, overrides[key], "unknown key")
    values.update(overrides)
    return scenario_from_mapping(values)


def with_capacity(cfg: ScenarioConfig, capacity: str) -> ScenarioConfig:
    """Switch the robot site density to the named capacity preset."""
    if capacity not in CAPACITY_SITE_DENSITY:
        raise ConfigError('capacity', capacity, "expected 'high' or 'low'")
    return replace(cfg, robot=replace(cfg.robot, site_density=CAPACITY_SITE_DENSITY[capacity]))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

_NON_NEGATIVE = {
    'pressure_gradient', 'tissue.max_power_density', 'robot.shell_fraction',
    'robot.ring_count', 'robot.uniform_flux', 'robot.pump_energy', 'solver.convection_blend',
}


def annular_segment_volume(cfg: ScenarioConfig) -> float:
    R, size = cfg.vessel_radius, cfg.robot.size
    return math.pi * (R ** 2 - (R - size) ** 2) * size / cfg.robot.robots_per_ring


def validate_scenario(cfg: ScenarioConfig) -> None:
    """Check every invariant; raise ConfigError naming the offending key."""
    for key, value in flatten_scenario(cfg).items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            continue
        if not math.isfinite(value):
            raise ConfigError(key, value, "must be finite")
        if key in _NON_NEGATIVE:
            if value < 0:
                raise ConfigError(key, value, "must be non-negative")
        elif value <= 0:
            raise ConfigError(key, value, "must be strictly positive")

    for key, value in (('oxygen.core_diffusivity', cfg.oxygen.core_diffusivity),
                       ('oxygen.robot_diffusivity', cfg.oxygen.robot_diffusivity),
                       ('rbc.inlet_gap', cfg.rbc.inlet_gap),
                       ('rbc.narrow_gap', cfg.rbc.narrow_gap),
                       ('robot.volume', cfg.robot.volume),
                       ('mesh.face_spacing', cfg.mesh.face_spacing)):
        if value is not None and not value > 0:
            raise ConfigError(key, value, "must be strictly positive")

    if not 0.0 < cfg.hematocrit < 1.0:
        raise ConfigError('hematocrit', cfg.hematocrit, "hematocrit must be in (0,1)")
    if cfg.robot.shell_fraction > 1.0:
        raise ConfigError('robot.shell_fraction', cfg.robot.shell_fraction, "must be in [0,1]")
    if cfg.solver.relaxation > 1.0:
        raise ConfigError('solver.relaxation', cfg.solver.relaxation, "must be in (0,1]")
    if cfg.solver.convection_blend > 1.0:
        raise ConfigError('solver.convection_blend', cfg.solver.convection_blend, "must be in [0,1]")
    if cfg.mesh.growth <= 1.0:
        raise ConfigError('mesh.growth', cfg.mesh.growth, "must exceed 1")
    if cfg.vessel_radius >= cfg.tissue_radius:
        raise ConfigError('tissue_radius', cfg.tissue_radius, "must exceed vessel_radius")
    if cfg.robot.size >= cfg.vessel_radius:
        raise ConfigError('robot.size', cfg.robot.size, "robot radial size must be below vessel_radius")
    if cfg.robot.ring_count * cfg.robot.size > cfg.vessel_length:
        raise ConfigError('robot.ring_count', cfg.robot.ring_count, "ringset longer than the vessel")
    if cfg.rbc.inlet_gap is not None and cfg.rbc.inlet_gap >= cfg.vessel_radius:
        raise ConfigError('rbc.inlet_gap', cfg.rbc.inlet_gap, "gap must be below vessel_radius")
    if not cfg.robot.pumps and cfg.robot.pump_mode is not PumpMode.FULL_ABSORB:
        raise ConfigError('robot.pump_mode', cfg.robot.pump_mode.value, "robots without pumps have no pump mode")

    geometric = annular_segment_volume(cfg)
    if cfg.robot.volume is not None and abs(cfg.robot.volume - geometric) > 0.01 * geometric:
        raise ConfigError(
            'robot.volume', cfg.robot.volume,
            f"inconsistent with annular segment volume {geometric:.4g} m^3",
        )

    positions = cfg.robot.ring_positions
    if positions:
        if len(positions) != cfg.robot.ring_count:
            raise ConfigError('robot.ring_positions', positions, "need one position per ring")
        ordered = sorted(positions)
        if list(ordered) != list(positions):
            raise ConfigError('robot.ring_positions', positions, "positions must increase")
        if ordered[0] < 0 or ordered[-1] + cfg.robot.size > cfg.vessel_length:
            raise ConfigError('robot.ring_positions', positions, "ring outside the vessel")
        for a, b in zip(ordered, ordered[1:]):
            if b - a < cfg.robot.size * (1 - 1e-9):
                raise ConfigError('robot.ring_positions', positions, "rings overlap")


# ---------------------------------------------------------------------------
# Derived quantities
# ---------------------------------------------------------------------------

def gap_fraction(mean_velocity: float) -> float:
    """Cell-free gap as a fraction of vessel radius, log-interpolated in mean speed."""
    (v0, g0), (v1, g1) = GAP_SPEED_POINTS
    if mean_velocity <= 0:
        return g0
    t = math.log(mean_velocity / v0) / math.log(v1 / v0)
    lo, hi = GAP_FRACTION_LIMITS
    return min(max(g0 + t * (g1 - g0), lo), hi)


def ring_starts(cfg: ScenarioConfig) -> Tuple[float, ...]:
    """Upstream axial edge of every ring; contiguous and centred by default."""
    if cfg.robot.ring_positions:
        return tuple(cfg.robot.ring_positions)
    n, size = cfg.robot.ring_count, cfg.robot.size
    z0 = 0.5 * cfg.vessel_length - 0.5 * n * size
    return tuple(z0 + k * size for k in range(n))


def derived_quantities(cfg: ScenarioConfig) -> DerivedParams:
    R = cfg.vessel_radius
    eta = cfg.fluid.viscosity
    v_avg = cfg.pressure_gradient * R ** 2 / (8.0 * eta)
    robot = cfg.robot
    volume = robot.volume if robot.volume is not None else annular_segment_volume(cfg)
    sites = robot.site_density * volume
    e = cfg.tissue.reaction_energy
    gamma = 6.0 * robot.site_density * robot.site_rate / robot.half_saturation

    inlet_gap = cfg.rbc.inlet_gap if cfg.rbc.inlet_gap is not None else gap_fraction(v_avg) * R
    narrow_radius = R - robot.size
    if cfg.rbc.narrow_gap is not None:
        narrow_gap = cfg.rbc.narrow_gap
    else:
        narrow_speed = v_avg * (R / narrow_radius) ** 2
        narrow_gap = gap_fraction(narrow_speed) * narrow_radius

    if cfg.mesh.face_spacing is not None:
        face_spacing = cfg.mesh.face_spacing
    else:
        face_spacing = 1.0e-8 if robot.ring_count == 1 else 1.0e-7

    return DerivedParams(
        mean_velocity=v_avg,
        volumetric_flow=math.pi * R ** 2 * v_avg,
        reynolds=cfg.fluid.density * v_avg * R / eta,
        robot_volume=volume,
        site_count=sites,
        site_power=e * robot.site_rate,
        max_robot_power=sites * robot.site_rate * e,
        max_robot_uptake=6.0 * sites * robot.site_rate,
        reaction_rate=gamma,
        reaction_length=math.sqrt(cfg.oxygen.diffusivity / gamma),
        inlet_gap=inlet_gap,
        narrow_gap=narrow_gap,
        diffusion_length=cfg.oxygen.diffusivity / v_avg if v_avg > 0 else math.inf,
        face_spacing=face_spacing,
        ring_starts=ring_starts(cfg),
    )


def refined_mesh(cfg: ScenarioConfig, factor: float = 2.0) -> ScenarioConfig:
    """Same scenario with every mesh spacing divided by `factor`, robot face spacing included."""
    mp = cfg.mesh
    return replace(cfg, mesh=replace(
        mp,
        face_spacing=derived_quantities(cfg).face_spacing / factor,
        wall_spacing=mp.wall_spacing / factor,
        max_radial_spacing=mp.max_radial_spacing / factor,
        max_axial_spacing=mp.max_axial_spacing / factor,
        max_tissue_spacing=mp.max_tissue_spacing / factor,
        max_cells=int(mp.max_cells * factor ** 2),
    ))
