"""Steady oxygen transport through plasma, cell core, robots and tissue.

The plasma concentration C obeys convection-diffusion with a release source in the cell
core, Michaelis-Menten sinks in tissue (and in robots without pumps) and robot boundary
conditions on the plasma-facing robot surfaces. Release depends on the hemoglobin
saturation S(z), which in turn depends on C at the core boundary; the two are solved
alternately with under-relaxation.

Inside the linear solves the unknown is C / C_in and the equations are divided by
D_O2 * 1 um, which keeps matrix entries of order one.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from physics.finite_volume import (
    conductance_matrix,
    convective_correction,
    face_conductance,
    harmonic_conductances,
    solve_linear,
    upwind_convection_matrix,
)
from physics.flow import FlowField
from physics.mesh import AxiMesh, BoundaryTag, FaceSet, Region
from physics.rbc_kinetics import (
    SaturationState,
    advance_saturation,
    build_saturation_grid,
    hill_equilibrium,
    partial_pressure_ratio,
    unloading_rate,
    unloading_rate_derivatives,
)
from utils.errors import ConfigError, MeshError
from utils.scenario import (
    CAPACITY_SITE_DENSITY,
    PumpMode,
    SaturationAverage,
    ScenarioConfig,
    apply_overrides,
    derived_quantities,
)

logger = logging.getLogger(__name__)

SCALE_LENGTH = 1.0e-6
NEGATIVE_ROUNDOFF = 1.0e-12


# ---------------------------------------------------------------------------
# Robot designs and boundary conditions
# ---------------------------------------------------------------------------

class RingMode(Enum):
    ABSORB = "absorb"
    FLUX = "flux"
    INERT = "inert"


@dataclass(frozen=True)
class RobotDesign:
    """One point of the design space: pumps x capacity, plus pump strategy and shell placement."""
    pumps: bool = True
    capacity: str = 'high'
    shell_fraction: float = 0.0
    pump_mode: PumpMode = PumpMode.FULL_ABSORB
    duty_cycle_phase: Optional[int] = None  # rings with index % 2 == phase absorb
    uniform_flux: Optional[float] = None

    @property
    def label(self) -> str:
        return f"{'pumps' if self.pumps else 'nopumps'}-{self.capacity}"

    @classmethod
    def parse(cls, label: str, **kwargs) -> 'RobotDesign':
        """Build from a `{pumps|nopumps}-{high|low}` label."""
        try:
            kind, capacity = label.strip().lower().split('-')
        except ValueError:
            raise ConfigError('design', label, "expected '{pumps|nopumps}-{high|low}'")
        if kind not in ('pumps', 'nopumps') or capacity not in CAPACITY_SITE_DENSITY:
            raise ConfigError('design', label, "expected '{pumps|nopumps}-{high|low}'")
        return cls(pumps=kind == 'pumps', capacity=capacity, **kwargs)

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> 'RobotDesign':
        robot = cfg.robot
        capacity = next((name for name, density in CAPACITY_SITE_DENSITY.items()
                         if math.isclose(density, robot.site_density, rel_tol=1e-9)), 'custom')
        return cls(pumps=robot.pumps, capacity=capacity, shell_fraction=robot.shell_fraction,
                   pump_mode=robot.pump_mode, uniform_flux=robot.uniform_flux)

    def apply(self, cfg: ScenarioConfig) -> ScenarioConfig:
        """Config with this design's robot settings."""
        overrides: Dict[str, object] = {
            'robot.pumps': self.pumps,
            'robot.shell_fraction': self.shell_fraction,
            'robot.pump_mode': self.pump_mode if self.pumps else PumpMode.FULL_ABSORB,
            'robot.uniform_flux': self.uniform_flux,
        }
        if self.capacity != 'custom':
            overrides['robot.site_density'] = CAPACITY_SITE_DENSITY[self.capacity]
        return apply_overrides(cfg, overrides)


@dataclass(frozen=True)
class RobotBoundary:
    """Resolved robot surface treatment for one solve."""
    pumps: bool
    ring_modes: Tuple[RingMode, ...]
    ring_flux: Tuple[float, ...]  # molecule/m^2/s, used by FLUX rings
    capacity_limited: bool
    ring_capacity: float  # molecule/s per ring
    shell_fraction: float = 0.0


def robot_boundary_condition(design: RobotDesign, cfg: ScenarioConfig, ring_count: int) -> RobotBoundary:
    derived = derived_quantities(cfg)
    capacity = derived.max_robot_uptake * cfg.robot.robots_per_ring
    if not design.pumps:
        return RobotBoundary(pumps=False, ring_modes=(), ring_flux=(), capacity_limited=False,
                             ring_capacity=capacity, shell_fraction=design.shell_fraction)

    modes = [RingMode.ABSORB] * ring_count
    flux = [0.0] * ring_count
    if design.pump_mode is PumpMode.UNIFORM_FLUX:
        if design.uniform_flux is None:
            raise ConfigError('robot.uniform_flux', None, "uniform flux mode needs a flux (or a flux search)")
        if design.uniform_flux < 0:
            raise ConfigError('robot.uniform_flux', design.uniform_flux, "flux must be non-negative")
        modes = [RingMode.FLUX] * ring_count
        flux = [design.uniform_flux] * ring_count
    elif design.pump_mode is PumpMode.DUTY_CYCLE:
        if design.duty_cycle_phase not in (0, 1):
            raise ConfigError('robot.pump_mode', design.pump_mode.value,
                              "duty cycle needs phase 0 or 1 (see duty_cycle_average)")
        modes = [RingMode.ABSORB if k % 2 == design.duty_cycle_phase else RingMode.INERT
                 for k in range(ring_count)]

    return RobotBoundary(pumps=True, ring_modes=tuple(modes), ring_flux=tuple(flux),
                         capacity_limited=cfg.robot.capacity_limited, ring_capacity=capacity)


def site_density_field(mesh: AxiMesh, cfg: ScenarioConfig, shell_fraction: float) -> np.ndarray:
    """Reaction-site density per cell; a shell concentrates every site next to the plasma face."""
    density = np.zeros(mesh.shape)
    robot = mesh.robot
    n_d = cfg.robot.site_density
    if 0.0 < shell_fraction < 1.0:
        if mesh.shell_radius is None:
            raise MeshError("mesh has no shell node; build it from a config with robot.shell_fraction set")
        shell = robot & (mesh.rc[:, None] < mesh.shell_radius)
        density[shell] = n_d / shell_fraction
    else:
        density[robot] = n_d
    return density


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

@dataclass
class CouplingState:
    """Progress of the C/S fixed-point iteration."""
    iteration: int = 0
    change_C: float = math.inf
    change_S: float = math.inf
    relaxation: float = 0.5
    tolerance: float = 1.0e-6
    converged: bool = False
    capacity_rounds: int = 0

    @property
    def residuals(self) -> Dict[str, float]:
        return {'dC': self.change_C, 'dS': self.change_S}


@dataclass(frozen=True, eq=False)
class ConcentrationField:
    """Converged plasma oxygen field and the per-cell / per-face exchange terms (molecule/s)."""
    mesh: AxiMesh
    C: np.ndarray
    phi: np.ndarray
    core_h: float
    boundary: RobotBoundary
    capped_rings: Tuple[int, ...]
    faces: FaceSet
    face_uptake: np.ndarray
    face_conductance: np.ndarray  # owner centre to face, whatever the face treatment
    robot_uptake_cells: np.ndarray
    tissue_uptake_cells: np.ndarray
    release_cells: np.ndarray
    inlet_influx: float
    outlet_efflux: float
    minimum_before_clamp: float
    section_flux: np.ndarray  # plasma oxygen through each axial face column (nz + 1), inlet first

    @property
    def ring_uptake(self) -> np.ndarray:
        rings = self.mesh.ring_count
        if self.boundary.pumps:
            return np.bincount(self.faces.ring, weights=self.face_uptake, minlength=rings)[:rings]
        robot = self.mesh.robot
        return np.bincount(self.mesh.ring_id[robot], weights=self.robot_uptake_cells[robot],
                           minlength=rings)[:rings]

    @property
    def robot_uptake(self) -> float:
        return float(self.ring_uptake.sum())

    @property
    def tissue_uptake(self) -> float:
        return float(self.tissue_uptake_cells.sum())

    @property
    def release(self) -> float:
        return float(self.release_cells.sum())

    def face_flux(self) -> np.ndarray:
        """Uptake per unit robot surface, molecule/m^2/s."""
        return self.face_uptake / self.faces.area

    def face_concentration(self) -> np.ndarray:
        """Concentration on each robot face, extrapolated from the owner cell."""
        owner = self.C[self.faces.i, self.faces.j]
        if not self.boundary.pumps:
            return owner
        g = np.where(self.face_conductance > 0, self.face_conductance, np.inf)
        return owner - self.face_uptake / g


@dataclass(frozen=True)
class BalanceReport:
    """Steady oxygen budget (molecule/s); residual = in - out - sinks."""
    plasma_in: float
    cells_in: float
    plasma_out: float
    cells_out: float
    robot_uptake: float
    tissue_uptake: float
    release: float

    @property
    def influx(self) -> float:
        return self.plasma_in + self.cells_in

    @property
    def residual(self) -> float:
        return (self.influx - self.plasma_out - self.cells_out
                - self.robot_uptake - self.tissue_uptake)

    @property
    def relative_residual(self) -> float:
        return abs(self.residual) / self.influx if self.influx > 0 else 0.0


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

def _interface_weights(mesh: AxiMesh, mode: SaturationAverage) -> sparse.csr_matrix:
    """Rows map C (per cell) to the plasma value driving release in each column."""
    core = mesh.mask(Region.CORE_FLUID)
    fluid = mesh.fluid
    rc, rn = mesh.rc, mesh.r_nodes
    rows, cols, vals = [], [], []
    for j in range(mesh.nz):
        cells = np.flatnonzero(core[:, j])
        if cells.size == 0:
            continue
        if mode is SaturationAverage.CROSS_SECTION:
            weights = mesh.volume[cells, j] / mesh.volume[cells, j].sum()
        else:
            i1 = int(cells.max())
            i2 = i1 + 1
            if i2 < mesh.n_lumen and fluid[i2, j]:
                w2 = (rn[i1 + 1] - rc[i1]) / (rc[i2] - rc[i1])
                cells, weights = np.array([i1, i2]), np.array([1.0 - w2, w2])
            else:
                cells, weights = np.array([i1]), np.array([1.0])
        rows.extend([j] * cells.size)
        cols.extend(mesh.index(cells, j).tolist())
        vals.extend(weights.tolist())
    return sparse.csr_matrix((vals, (rows, cols)), shape=(mesh.nz, mesh.cell_count))


class _TransportSystem:
    """Linear pieces of the transport problem that do not change between fixed-point iterations."""

    def __init__(self, mesh: AxiMesh, flow: FlowField, cfg: ScenarioConfig,
                 boundary: RobotBoundary, capped: Sequence[int]):
        if mesh.core_boundary is None:
            raise MeshError("transport needs a mesh tagged with the traced core boundary")
        self.mesh, self.flow, self.cfg, self.boundary = mesh, flow, cfg, boundary
        self.capped = tuple(sorted(capped))
        self.c_in = cfg.oxygen.inlet_concentration
        self.scale = cfg.oxygen.diffusivity * SCALE_LENGTH
        size = mesh.cell_count

        self.core = mesh.mask(Region.CORE_FLUID)
        self.core_h = cfg.hematocrit * flow.total_flow / mesh.core_boundary.core_flow
        self.phi = np.where(self.core, 1.0 - self.core_h, 1.0)
        robot = mesh.robot
        self.inactive = robot if boundary.pumps else np.zeros(mesh.shape, dtype=bool)

        D = np.full(mesh.shape, cfg.oxygen.diffusivity)
        D[self.core] = cfg.core_diffusivity
        D[robot] = 0.0 if boundary.pumps else cfg.robot_diffusivity
        self.coeff = self.phi * D

        g_r, g_z = harmonic_conductances(mesh, self.coeff)
        self.g_z = g_z
        g_r[mesh.n_lumen, robot[mesh.n_lumen - 1, :]] = 0.0  # robot outer face rests on the wall
        matrix = conductance_matrix(mesh, g_r, g_z)
        matrix = matrix + upwind_convection_matrix(mesh, flow.flow_r, flow.flow_z, self.phi)

        diag = np.zeros(size)
        rhs = np.zeros(size)

        self.inlet = mesh.boundary_faces(BoundaryTag.INLET)
        self.inlet_q = flow.flow_z[self.inlet.i, 0] * self.phi[self.inlet.i, self.inlet.j]
        self.inlet_g = face_conductance(self.inlet, self.coeff)
        idx = mesh.index(self.inlet.i, self.inlet.j)
        np.add.at(diag, idx, self.inlet_g)
        np.add.at(rhs, idx, self.inlet_g + self.inlet_q)

        self.outlet = mesh.boundary_faces(BoundaryTag.OUTLET)
        self.outlet_q = flow.flow_z[self.outlet.i, mesh.nz] * self.phi[self.outlet.i, self.outlet.j]
        np.add.at(diag, mesh.index(self.outlet.i, self.outlet.j), self.outlet_q)

        self.faces = mesh.boundary_faces(BoundaryTag.ROBOT_PLASMA_FACE)
        self.face_g = np.zeros(self.faces.size)
        self.face_g_full = np.zeros(self.faces.size)
        self.face_flux = np.zeros(self.faces.size)
        if boundary.pumps and self.faces.size:
            modes = np.array([boundary.ring_modes[k].value for k in self.faces.ring])
            flux = np.array([boundary.ring_flux[k] for k in self.faces.ring])
            for k in self.capped:
                ring = self.faces.ring == k
                modes[ring] = RingMode.FLUX.value
                flux[ring] = boundary.ring_capacity / self.faces.area[ring].sum()
            absorb = modes == RingMode.ABSORB.value
            fixed = modes == RingMode.FLUX.value
            self.face_g_full = face_conductance(self.faces, self.coeff)
            self.face_g[absorb] = self.face_g_full[absorb]
            self.face_flux[fixed] = flux[fixed]
            owners = mesh.index(self.faces.i, self.faces.j)
            np.add.at(diag, owners, self.face_g)
            np.add.at(rhs, owners, -self.face_flux * self.faces.area / self.c_in)

        self.base = (matrix + sparse.diags(diag)).tocsr() / self.scale
        self.base = self.base + sparse.diags(self.inactive.ravel().astype(float))
        self.rhs = rhs / self.scale
        self.rhs[self.inactive.ravel()] = 0.0

        # sinks
        self.volume = mesh.volume
        self.tissue_rate = np.where(mesh.tissue, 6.0 * cfg.tissue.max_power_density / cfg.tissue.reaction_energy, 0.0)
        if boundary.pumps:
            self.robot_rate = np.zeros(mesh.shape)
        else:
            self.robot_rate = 6.0 * site_density_field(mesh, cfg, boundary.shell_fraction) * cfg.robot.site_rate

        # release coupling
        self.weights = _interface_weights(mesh, cfg.rbc.saturation_average)
        core_idx = np.flatnonzero(self.core.ravel())
        core_col = core_idx % mesh.nz
        self.column_of_core = sparse.csr_matrix(
            (np.ones(core_idx.size), (core_idx, core_col)), shape=(size, mesh.nz))
        self.core_volume = (self.volume * self.core).ravel()
        self.grid = build_saturation_grid(mesh, mesh.core_boundary, cfg.mesh.saturation_points)
        self.a_inlet = float(partial_pressure_ratio(self.c_in, cfg))

    # -- pieces --------------------------------------------------------------
    def sink_coefficients(self, C: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Linearized Michaelis-Menten uptake coefficients (m^3/s) for tissue and robots."""
        Cp = np.maximum(C, 0.0)
        tissue = self.tissue_rate * self.volume / (self.cfg.tissue.half_saturation + Cp)
        robot = self.robot_rate * self.volume / (self.cfg.robot.half_saturation + Cp)
        return tissue, robot

    def release_terms(self, x: np.ndarray, S: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-column release density, its derivative in interface C, and interface C / C_in."""
        cfg = self.cfg
        x_int = self.weights @ x
        a = partial_pressure_ratio(x_int * self.c_in, cfg)[self.grid.column]
        rate = unloading_rate(a, S, cfg.rbc.hill_n, cfg.rbc.unloading_time)
        d_da, _ = unloading_rate_derivatives(a, S, cfg.rbc.hill_n, cfg.rbc.unloading_time)
        strength = self.core_h * cfg.rbc.c_max
        gamma = -strength * self.grid.column_mean(rate)
        dgamma = -strength * self.grid.column_mean(d_da) * cfg.oxygen.henry_ratio / cfg.rbc.p_half
        return gamma, dgamma, x_int

    def solve(self, x: np.ndarray, S: np.ndarray) -> np.ndarray:
        tissue, robot = self.sink_coefficients((x * self.c_in).reshape(self.mesh.shape))
        sinks = (tissue + robot).ravel() / self.scale

        gamma, dgamma, x_int = self.release_terms(x, S)
        col_gamma = self.column_of_core @ gamma
        col_dgamma = self.column_of_core @ dgamma
        coupling = sparse.diags(self.core_volume * col_dgamma) @ self.column_of_core @ self.weights
        release_rhs = self.core_volume * (col_gamma / self.c_in - col_dgamma * (self.column_of_core @ x_int))

        correction = self.cfg.solver.convection_blend * convective_correction(
            self.mesh, self.flow.flow_r, self.flow.flow_z, self.phi, x.reshape(self.mesh.shape))

        matrix = self.base + sparse.diags(sinks) - coupling / self.scale
        rhs = self.rhs + (release_rhs - correction) / self.scale
        rhs[self.inactive.ravel()] = 0.0
        return solve_linear(matrix, rhs)

    # -- fixed point ---------------------------------------------------------
    def iterate(self, x: Optional[np.ndarray], S: Optional[np.ndarray],
                state: CouplingState, on_iteration: Optional[Callable[[CouplingState], None]]
                ) -> Tuple[np.ndarray, SaturationState]:
        cfg = self.cfg
        omega = cfg.solver.relaxation
        if x is None:
            x = np.ones(self.mesh.cell_count)
        x = np.where(self.inactive.ravel(), 0.0, x)
        if S is None:
            S = np.full(self.grid.size, float(hill_equilibrium(self.a_inlet, cfg.rbc.hill_n)))

        saturation = None
        state.converged = False
        for iteration in range(1, cfg.solver.max_iterations + 1):
            solved = self.solve(x, S)
            x_new = x + omega * (solved - x)
            state.change_C = float(np.abs(x_new - x).max() / max(np.abs(x_new).max(), 1e-300))
            x = x_new

            a_cols = partial_pressure_ratio((self.weights @ x) * self.c_in, cfg)
            saturation = advance_saturation(self.grid, a_cols, self.a_inlet, cfg, initial=S)
            S_new = S + omega * (saturation.S - S)
            state.change_S = float(np.abs(S_new - S).max() / max(S_new.max(), 1e-300))
            S = S_new

            state.iteration += 1
            logger.debug("Picard %d: dC=%.3e dS=%.3e", iteration, state.change_C, state.change_S)
            if on_iteration is not None:
                on_iteration(state)
            if state.change_C < state.tolerance and state.change_S < state.tolerance:
                state.converged = True
                break

        a_cols = partial_pressure_ratio((self.weights @ x) * self.c_in, cfg)
        a_sub = a_cols[self.grid.column]
        final = SaturationState(
            z=self.grid.z, S=S, a=a_sub,
            rate=unloading_rate(a_sub, S, cfg.rbc.hill_n, cfg.rbc.unloading_time),
            inlet=saturation.inlet if saturation else float(S[0]),
            iterations=saturation.iterations if saturation else 0, hill_n=cfg.rbc.hill_n,
        )
        return x, final

    def internal_section_flux(self, C: np.ndarray) -> np.ndarray:
        """Advected plus diffused plasma oxygen through each internal axial face column (molecule/s)."""
        mesh = self.mesh
        carried = self.phi * C
        q = self.flow.flow_z[:, 1:-1]
        up, down = carried[:, :-1], carried[:, 1:]
        d_p = (mesh.z_nodes[1:-1] - mesh.zc[:-1])[None, :]
        d_n = (mesh.zc[1:] - mesh.z_nodes[1:-1])[None, :]
        upwind = np.where(q >= 0.0, up, down)
        central = up + (down - up) * d_p / (d_p + d_n)
        advected = q * (upwind + self.cfg.solver.convection_blend * (central - upwind))
        diffused = self.g_z[:, 1:-1] * (C[:, :-1] - C[:, 1:])
        return (advected + diffused).sum(axis=0)

    def field(self, x: np.ndarray, saturation: SaturationState) -> ConcentrationField:
        mesh = self.mesh
        minimum = float(x.min())
        if minimum < -NEGATIVE_ROUNDOFF:
            logger.warning("Oxygen concentration fell to %.3e C_in before clamping", minimum)
        C = np.maximum(x, 0.0).reshape(mesh.shape) * self.c_in

        tissue, robot = self.sink_coefficients(C)
        gamma, _, _ = self.release_terms(np.maximum(x, 0.0), saturation.S)
        release = (self.core_volume * (self.column_of_core @ gamma)).reshape(mesh.shape)

        owner_C = C[self.faces.i, self.faces.j]
        face_uptake = self.face_g * owner_C + self.face_flux * self.faces.area
        inlet_C = C[self.inlet.i, self.inlet.j]
        inlet = float(np.sum(self.inlet_q * self.c_in + self.inlet_g * (self.c_in - inlet_C)))
        outlet = float(np.sum(self.outlet_q * C[self.outlet.i, self.outlet.j]))
        sections = np.concatenate([[inlet], self.internal_section_flux(C), [outlet]])

        return ConcentrationField(
            mesh=mesh, C=C, phi=self.phi, core_h=self.core_h, boundary=self.boundary,
            capped_rings=self.capped, faces=self.faces, face_uptake=face_uptake,
            face_conductance=self.face_g_full, robot_uptake_cells=robot * C,
            tissue_uptake_cells=tissue * C, release_cells=release,
            inlet_influx=inlet, outlet_efflux=outlet, minimum_before_clamp=minimum * self.c_in,
            section_flux=sections,
        )


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def assemble_sources(field: ConcentrationField) -> np.ndarray:
    """Volumetric source density (molecule/m^3/s): release > 0 in the core, uptake < 0 elsewhere."""
    net = field.release_cells - field.tissue_uptake_cells - field.robot_uptake_cells
    return net / field.mesh.volume


def solve_coupled(mesh: AxiMesh, flow: FlowField, cfg: ScenarioConfig,
                  design: Optional[RobotDesign] = None,
                  on_iteration: Optional[Callable[[CouplingState], None]] = None,
                  initial: Optional[ConcentrationField] = None,
                  ) -> Tuple[ConcentrationField, SaturationState, CouplingState]:
    """Alternate the 2D oxygen solve and the 1D saturation solve until both settle.

    Exhausting the iteration budget returns the last state with `converged=False`.
    Rings whose full-absorb uptake exceeds the reaction capacity are switched to a capped
    uniform flux and the problem is solved again.
    """
    design = design or RobotDesign.from_config(cfg)
    boundary = robot_boundary_condition(design, cfg, mesh.ring_count)
    state = CouplingState(relaxation=cfg.solver.relaxation, tolerance=cfg.solver.tolerance)
    capped: List[int] = []
    x = initial.C.ravel() / cfg.oxygen.inlet_concentration if initial is not None else None
    S = None

    while True:
        system = _TransportSystem(mesh, flow, cfg, boundary, capped)
        x, saturation = system.iterate(x, S, state, on_iteration)
        S = saturation.S
        result = system.field(x, saturation)
        if not (boundary.pumps and boundary.capacity_limited):
            break
        uptake = result.ring_uptake
        over = [k for k in range(mesh.ring_count)
                if k not in capped and boundary.ring_modes[k] is RingMode.ABSORB
                and uptake[k] > boundary.ring_capacity * (1.0 + 1e-9)]
        if not over:
            break
        capped.extend(over)
        state.capacity_rounds += 1
        logger.info("Capacity cap binds on ring(s) %s; re-solving with capped uptake",
                    ", ".join(str(k + 1) for k in over))

    level = logging.INFO if state.converged else logging.WARNING
    logger.log(level, "Coupled solve %s after %d iterations (dC=%.2e, dS=%.2e); robots %.4e /s, tissue %.4e /s",
               "converged" if state.converged else "NOT converged", state.iteration,
               state.change_C, state.change_S, result.robot_uptake, result.tissue_uptake)
    return result, saturation, state


def species_balance_audit(field: ConcentrationField, saturation: SaturationState,
                          flow: FlowField, cfg: ScenarioConfig) -> BalanceReport:
    # cell-bound oxygen travels with the core flow: h Q_core = H Q
    carried = cfg.hematocrit * flow.total_flow * cfg.rbc.c_max
    return BalanceReport(
        plasma_in=field.inlet_influx,
        cells_in=carried * saturation.inlet,
        plasma_out=field.outlet_efflux,
        cells_out=carried * saturation.outlet,
        robot_uptake=field.robot_uptake,
        tissue_uptake=field.tissue_uptake,
        release=field.release,
    )


# ---------------------------------------------------------------------------
# Extracts
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RadialSection:
    z: float
    r: np.ndarray
    C: np.ndarray
    region: np.ndarray


def radial_section(field: ConcentrationField, z: Optional[float] = None) -> RadialSection:
    """C(r) through the column at z (default: middle of the ringset, or mid-vessel)."""
    mesh = field.mesh
    z = mesh.mid_aggregate_z() if z is None else z
    j = mesh.column_at(z)
    return RadialSection(z=float(mesh.zc[j]), r=mesh.rc.copy(), C=field.C[:, j].copy(),
                         region=mesh.region[:, j].copy())


def tissue_power_profile(field: ConcentrationField, cfg: ScenarioConfig) -> Tuple[np.ndarray, np.ndarray]:
    """(z, P_tissue / P_max) in the tissue cells next to the vessel wall."""
    mesh = field.mesh
    C = field.C[mesh.n_lumen, :]
    K = cfg.tissue.half_saturation
    return mesh.zc.copy(), C / (K + C)


def wall_concentration(field: ConcentrationField, j: int) -> float:
    """C at the vessel wall, linear between the last lumen cell and the first tissue cell."""
    mesh = field.mesh
    i_in, i_out = mesh.n_lumen - 1, mesh.n_lumen
    r_in, r_out = mesh.rc[i_in], mesh.rc[i_out]
    t = (mesh.vessel_radius - r_in) / (r_out - r_in)
    return float((1.0 - t) * field.C[i_in, j] + t * field.C[i_out, j])


def sleeve_profile(field: ConcentrationField) -> Tuple[np.ndarray, np.ndarray]:
    """(z, C) along the lumen cell row next to the wall."""
    mesh = field.mesh
    return mesh.zc.copy(), field.C[mesh.n_lumen - 1, :].copy()


def upstream_influence(field: ConcentrationField, reference: ConcentrationField,
                       distances: Sequence[float] = (5.0e-6, 30.0e-6)) -> Dict[float, float]:
    """Relative drop of sleeve C against a robot-free run, at distances upstream of the first ring."""
    if not field.mesh.ring_spans:
        return {}
    start = field.mesh.ring_spans[0][0]
    z, C = sleeve_profile(field)
    z_ref, C_ref = sleeve_profile(reference)
    drops = {}
    for d in distances:
        target = start - d
        if target < z[0]:
            continue
        c = float(np.interp(target, z, C))
        c_ref = float(np.interp(target, z_ref, C_ref))
        drops[d] = (c_ref - c) / c_ref if c_ref > 0 else 0.0
    return drops
