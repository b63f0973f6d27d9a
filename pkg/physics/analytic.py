"""Closed-form and 1D reference models: isolated spherical robot, Krogh cylinder, Poiseuille tube."""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import minimize_scalar

from utils.scenario import CAPACITY_SITE_DENSITY, ScenarioConfig, derived_quantities, with_capacity

logger = logging.getLogger(__name__)

PICO = 1.0e12
SPHERE_POINTS = 200


# ---------------------------------------------------------------------------
# Isolated sphere in stationary fluid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SphereModel:
    """Robot volume as a sphere with linearized internal kinetics (uptake gamma * C)."""
    radius: float
    concentration: float
    gamma: float
    diffusivity: float

    @property
    def mu(self) -> float:
        return math.sqrt(self.diffusivity / self.gamma)

    @property
    def ratio(self) -> float:
        """a / mu."""
        return self.radius / self.mu

    @classmethod
    def from_config(cls, cfg: ScenarioConfig, concentration: Optional[float] = None) -> 'SphereModel':
        derived = derived_quantities(cfg)
        return cls(
            radius=sphere_radius(derived.robot_volume),
            concentration=cfg.oxygen.inlet_concentration if concentration is None else concentration,
            gamma=derived.reaction_rate,
            diffusivity=cfg.oxygen.diffusivity,
        )


def sphere_radius(volume: float) -> float:
    return (3.0 * volume / (4.0 * math.pi)) ** (1.0 / 3.0)


def absorption_rate(a: float, C: float, diffusivity: float) -> float:
    """Oxygen collected by a perfectly absorbing sphere, molecule/s."""
    return 4.0 * math.pi * diffusivity * a * C


def sphere_absorption_power(a: float, C: float, cfg: ScenarioConfig) -> float:
    """Power in watts of a perfectly absorbing sphere of radius a in ambient concentration C."""
    return absorption_rate(a, C, cfg.oxygen.diffusivity) * cfg.tissue.reaction_energy / 6.0


def f_mu(a: float, mu: float) -> float:
    """Fraction of the perfect-absorber uptake reached with internal linear kinetics."""
    x = a / mu
    return 1.0 - math.tanh(x) / x


def thin_shell_fraction(a: float, mu: float) -> float:
    """Uptake fraction with every site in an infinitesimal shell at the surface."""
    k = (a / mu) ** 2 / 3.0
    return k / (1.0 + k)


@dataclass(frozen=True)
class PumpBenefit:
    fraction: float  # f_mu
    uncapped: float  # 1 / f_mu
    capped: float  # pump power limited by the reaction capacity


def pump_benefit(sphere: SphereModel, max_uptake: float) -> PumpBenefit:
    """Power ratio pumps / no pumps, with the pump side capped at the reaction capacity (molecule/s)."""
    f = f_mu(sphere.radius, sphere.mu)
    absorbed = absorption_rate(sphere.radius, sphere.concentration, sphere.diffusivity)
    return PumpBenefit(fraction=f, uncapped=1.0 / f, capped=min(absorbed, max_uptake) / (f * absorbed))


def cap_crossover_concentration(cfg: ScenarioConfig) -> float:
    """Ambient concentration where perfect-absorber uptake reaches 6 N r."""
    derived = derived_quantities(cfg)
    a = sphere_radius(derived.robot_volume)
    return derived.max_robot_uptake / (4.0 * math.pi * cfg.oxygen.diffusivity * a)


def radial_sphere_uptake(a: float, mu: float, shell_thickness: Optional[float] = None,
                         points: int = SPHERE_POINTS) -> float:
    """Uptake fraction from a finite-volume solve of the sphere's radial reaction-diffusion problem.

    Sites are conserved: a shell of thickness t holds them all at proportionally higher density.
    Outside the sphere the exact exterior conductance 4 pi D a is used (unit D, unit ambient C).
    """
    t = a if shell_thickness is None else min(shell_thickness, a)
    gamma = 1.0 / mu ** 2
    inner = a - t
    if inner > 0:
        n_shell = max(points // 10, 10)
        nodes = np.concatenate([np.linspace(0.0, inner, points - n_shell + 1),
                                np.linspace(inner, a, n_shell + 1)[1:]])
        gamma_shell = gamma * a ** 3 / (a ** 3 - inner ** 3)
    else:
        nodes = np.linspace(0.0, a, points + 1)
        gamma_shell = gamma
    rc = 0.5 * (nodes[1:] + nodes[:-1])
    volume = 4.0 / 3.0 * math.pi * (nodes[1:] ** 3 - nodes[:-1] ** 3)
    k = np.where(rc > inner, gamma_shell, 0.0) * volume

    g = 4.0 * math.pi * rc[:-1] * rc[1:] / np.diff(rc)
    half = 4.0 * math.pi * rc[-1] * a / (a - rc[-1])
    exterior = 4.0 * math.pi * a
    g_out = 1.0 / (1.0 / half + 1.0 / exterior)

    n = rc.size
    diag = k.copy()
    diag[:-1] += g
    diag[1:] += g
    diag[-1] += g_out
    bands = np.zeros((3, n))
    bands[0, 1:] = -g
    bands[1] = diag
    bands[2, :-1] = -g
    rhs = np.zeros(n)
    rhs[-1] = g_out
    C = solve_banded((1, 1), bands, rhs)
    return float(g_out * (1.0 - C[-1]) / exterior)


def shell_benefit(a: float, mu: float, shell_thickness: float, points: int = SPHERE_POINTS) -> float:
    """Uptake with all sites in an outer shell, relative to uniformly spread sites."""
    return radial_sphere_uptake(a, mu, shell_thickness, points) / radial_sphere_uptake(a, mu, None, points)


def thin_shell_benefit(ratio: float) -> float:
    """Limit of shell_benefit as the shell thickness vanishes, as a function of a / mu."""
    return thin_shell_fraction(ratio, 1.0) / f_mu(ratio, 1.0)


def shell_benefit_optimum(bounds: Tuple[float, float] = (0.5, 20.0)) -> Tuple[float, float]:
    """(a / mu, benefit) where the thin-shell benefit peaks."""
    result = minimize_scalar(lambda x: -thin_shell_benefit(x), bounds=bounds, method='bounded',
                             options={'xatol': 1e-6})
    return float(result.x), float(-result.fun)


# ---------------------------------------------------------------------------
# Krogh cylinder
# ---------------------------------------------------------------------------

def krogh_profile(r, cfg: ScenarioConfig, wall_concentration: float,
                  power_density: Optional[float] = None) -> np.ndarray:
    """Tissue C(r) with uniform consumption and no axial diffusion, clipped at zero."""
    q = 6.0 * (cfg.tissue.max_power_density if power_density is None else power_density) / cfg.tissue.reaction_energy
    D = cfg.oxygen.diffusivity
    R, Rt = cfg.vessel_radius, cfg.tissue_radius
    r = np.asarray(r, dtype=float)
    C = wall_concentration + q / (4.0 * D) * (r ** 2 - R ** 2) - q * Rt ** 2 / (2.0 * D) * np.log(r / R)
    return np.maximum(C, 0.0)


def krogh_zero_crossing(cfg: ScenarioConfig, wall_concentration: float, samples: int = 20001) -> Optional[float]:
    """Radius where the Krogh profile first reaches zero (None if it stays positive)."""
    r = np.linspace(cfg.vessel_radius, cfg.tissue_radius, samples)
    zero = np.flatnonzero(krogh_profile(r, cfg, wall_concentration) <= 0.0)
    return float(r[zero[0]]) if zero.size else None


@dataclass(frozen=True, eq=False)
class KroghComparison:
    """Tissue C(r) from the full solve next to the Krogh profile matched at the wall."""
    z: float
    r: np.ndarray
    pde: np.ndarray
    krogh: np.ndarray
    wall_concentration: float

    @property
    def deviation(self) -> np.ndarray:
        """Pointwise difference relative to the wall concentration."""
        if self.wall_concentration <= 0:
            return np.zeros_like(self.r)
        return (self.pde - self.krogh) / self.wall_concentration

    @property
    def max_deviation(self) -> float:
        return float(np.abs(self.deviation).max()) if self.r.size else 0.0


def compare_krogh(r: np.ndarray, C: np.ndarray, z: float, wall_concentration: float,
                  cfg: ScenarioConfig) -> KroghComparison:
    r = np.asarray(r, dtype=float)
    return KroghComparison(z=z, r=r, pde=np.asarray(C, dtype=float),
                           krogh=krogh_profile(r, cfg, wall_concentration),
                           wall_concentration=wall_concentration)


def krogh_wall_flux(cfg: ScenarioConfig) -> Tuple[float, float]:
    """(wall influx, tissue consumption) per unit vessel length, molecule/m/s."""
    q = 6.0 * cfg.tissue.max_power_density / cfg.tissue.reaction_energy
    R, Rt = cfg.vessel_radius, cfg.tissue_radius
    D = cfg.oxygen.diffusivity
    gradient = q / (2.0 * D) * (R - Rt ** 2 / R)
    return -2.0 * math.pi * R * D * gradient, q * math.pi * (Rt ** 2 - R ** 2)


# ---------------------------------------------------------------------------
# Poiseuille tube
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PoiseuilleFlow:
    pressure_gradient: float
    radius: float
    viscosity: float

    @property
    def mean_velocity(self) -> float:
        return self.pressure_gradient * self.radius ** 2 / (8.0 * self.viscosity)

    @property
    def volumetric_flow(self) -> float:
        return math.pi * self.radius ** 2 * self.mean_velocity

    def velocity(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return self.pressure_gradient * (self.radius ** 2 - r ** 2) / (4.0 * self.viscosity)


def poiseuille(cfg: ScenarioConfig) -> PoiseuilleFlow:
    return PoiseuilleFlow(cfg.pressure_gradient, cfg.vessel_radius, cfg.fluid.viscosity)


# ---------------------------------------------------------------------------
# Design table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DesignRow:
    capacity: str
    concentration: float
    gamma: float
    mu: float
    ratio: float
    f_mu: float
    benefit: float
    capped_benefit: float
    thin_shell_benefit: float
    pumps_power_pW: float
    no_pumps_power_pW: float
    crossover: float


def analytic_design_table(cfg: ScenarioConfig,
                          concentrations: Tuple[float, ...] = (3.0e22, 7.0e22)) -> List[DesignRow]:
    rows = []
    for capacity in CAPACITY_SITE_DENSITY:
        variant = with_capacity(cfg, capacity)
        derived = derived_quantities(variant)
        for C in concentrations:
            sphere = SphereModel.from_config(variant, C)
            benefit = pump_benefit(sphere, derived.max_robot_uptake)
            absorbed = absorption_rate(sphere.radius, C, sphere.diffusivity)
            e6 = cfg.tissue.reaction_energy / 6.0
            rows.append(DesignRow(
                capacity=capacity, concentration=C, gamma=sphere.gamma, mu=sphere.mu,
                ratio=sphere.ratio, f_mu=benefit.fraction, benefit=benefit.uncapped,
                capped_benefit=benefit.capped, thin_shell_benefit=thin_shell_benefit(sphere.ratio),
                pumps_power_pW=min(absorbed, derived.max_robot_uptake) * e6 * PICO,
                no_pumps_power_pW=benefit.fraction * absorbed * e6 * PICO,
                crossover=cap_crossover_concentration(variant),
            ))
    return rows
