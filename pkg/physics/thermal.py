"""Steady temperature rise from robot power generation (advection in the lumen, conduction everywhere)."""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import sparse

from physics.finite_volume import (
    accumulate,
    conductance_matrix,
    face_conductance,
    harmonic_conductances,
    solve_linear,
    upwind_convection_matrix,
)
from physics.flow import FlowField
from physics.mesh import AxiMesh, BoundaryTag
from physics.oxygen_transport import ConcentrationField
from physics.analytic import PICO
from physics.robot_power import PowerReport
from utils.scenario import ScenarioConfig

logger = logging.getLogger(__name__)

SCALE_LENGTH = 1.0e-6


@dataclass(frozen=True)
class HeatBalance:
    """Watts; residual = source - advected - conducted."""
    source: float
    advected: float
    conducted: float

    @property
    def residual(self) -> float:
        return self.source - self.advected - self.conducted

    @property
    def relative_residual(self) -> float:
        return abs(self.residual) / self.source if self.source > 0 else 0.0


@dataclass(frozen=True, eq=False)
class TemperatureField:
    dT: np.ndarray  # K above body temperature
    balance: HeatBalance
    max_location: Tuple[float, float]  # (r, z)

    @property
    def max_rise(self) -> float:
        return float(self.dT.max())


def power_density(field: ConcentrationField, report: PowerReport, cfg: ScenarioConfig) -> np.ndarray:
    """Heat generation W/m^3: uniform over each ring with pumps, local reaction rate without."""
    mesh = field.mesh
    if not field.boundary.pumps:
        return field.robot_uptake_cells * cfg.tissue.reaction_energy / 6.0 / mesh.volume
    Q = np.zeros(mesh.shape)
    robot = mesh.robot
    for k, power in enumerate(report.ring_power_pW / PICO):
        ring = robot & (mesh.ring_id == k)
        volume = mesh.volume[ring].sum()
        if volume > 0:
            Q[ring] = power / volume
    return Q


def solve_heat(mesh: AxiMesh, flow: FlowField, Q: np.ndarray, cfg: ScenarioConfig) -> TemperatureField:
    """Body temperature at the inlet and the outer tissue radius; tissue ends insulated."""
    fluid = cfg.fluid
    k = np.full(mesh.shape, fluid.thermal_conductivity)
    rho_c = np.full(mesh.shape, fluid.density * fluid.heat_capacity)
    scale = fluid.thermal_conductivity * SCALE_LENGTH

    g_r, g_z = harmonic_conductances(mesh, k)
    matrix = conductance_matrix(mesh, g_r, g_z) + upwind_convection_matrix(mesh, flow.flow_r, flow.flow_z, rho_c)

    inlet = mesh.boundary_faces(BoundaryTag.INLET)
    inlet_g = face_conductance(inlet, k)
    outer = mesh.boundary_faces(BoundaryTag.TISSUE_OUTER)
    outer_g = face_conductance(outer, k)
    outlet = mesh.boundary_faces(BoundaryTag.OUTLET)
    outlet_q = flow.flow_z[outlet.i, mesh.nz] * rho_c[outlet.i, outlet.j]
    diag = accumulate(mesh, inlet, inlet_g) + accumulate(mesh, outer, outer_g) + accumulate(mesh, outlet, outlet_q)

    source = (Q * mesh.volume).ravel()
    system = (matrix + sparse.diags(diag)) / scale
    dT = solve_linear(system, source / scale).reshape(mesh.shape)

    balance = HeatBalance(
        source=float(source.sum()),
        advected=float(np.sum(outlet_q * dT[outlet.i, outlet.j])),
        conducted=float(np.sum(inlet_g * dT[inlet.i, inlet.j]) + np.sum(outer_g * dT[outer.i, outer.j])),
    )
    i, j = np.unravel_index(int(np.argmax(dT)), mesh.shape)
    result = TemperatureField(dT=dT, balance=balance, max_location=(float(mesh.rc[i]), float(mesh.zc[j])))
    logger.info("Heat: %.3e W generated, max rise %.3e K at r=%.2f um z=%.2f um",
                balance.source, result.max_rise, mesh.rc[i] * 1e6, mesh.zc[j] * 1e6)
    return result


def heated_region_contains_max(mesh: AxiMesh, temperature: TemperatureField, Q: np.ndarray) -> bool:
    """The hottest cell is a heated cell or touches one."""
    if not np.any(Q > 0):
        return True
    i, j = np.unravel_index(int(np.argmax(temperature.dT)), mesh.shape)
    heated = Q > 0
    lo_i, hi_i = max(i - 1, 0), min(i + 2, mesh.nr)
    lo_j, hi_j = max(j - 1, 0), min(j + 2, mesh.nz)
    return bool(heated[lo_i:hi_i, lo_j:hi_j].any())
