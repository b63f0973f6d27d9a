"""Steady axisymmetric Stokes flow in the vessel lumen.

Reynolds numbers are of order 1e-3, so inertia is dropped and the flow is linear in the
pressure gradient. The discrete problem is assembled once on a staggered (MAC) grid in
scaled units (lengths in micrometres, unit viscosity, unit pressure gradient) and the
physical field is the scaled solution times the gradient.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from physics.mesh import AxiMesh, BoundaryTag, CoreBoundary
from utils.errors import ConvergenceError, MeshError
from utils.scenario import ScenarioConfig, derived_quantities

logger = logging.getLogger(__name__)

LENGTH_SCALE = 1.0e-6
REFINEMENT_STEPS = 3


@dataclass(frozen=True, eq=False)
class FlowField:
    """Lumen velocity and pressure.

    `vz` lives on axial faces (n_lumen, nz + 1), `vr` on radial faces (n_lumen + 1, nz),
    `pressure` at lumen cell centres (NaN inside robots). `flow_r`/`flow_z` are face
    volumetric flows on the full mesh (zero outside the lumen). `psi` is the volumetric
    flow through the disc of radius r_nodes[k] at axial face jf.
    """
    vz: np.ndarray
    vr: np.ndarray
    pressure: np.ndarray
    psi: np.ndarray
    flow_r: np.ndarray
    flow_z: np.ndarray
    n_lumen: int
    pressure_gradient: float
    total_flow: float
    v_avg: float
    divergence_residual: float
    linear_residual: float
    v_avg_cell: Optional[float] = None

    def cell_velocity(self) -> Tuple[np.ndarray, np.ndarray]:
        """Cell-centred (v_r, v_z) over the lumen."""
        return 0.5 * (self.vr[1:, :] + self.vr[:-1, :]), 0.5 * (self.vz[:, 1:] + self.vz[:, :-1])

    def cross_section_flows(self) -> np.ndarray:
        return self.psi[-1, :]


@dataclass(frozen=True)
class WallForce:
    total: float
    per_robot: float
    coefficient: float  # total / pressure gradient, m^3
    shear: float
    pressure: float


@dataclass(frozen=True, eq=False)
class HematocritProfile:
    z: np.ndarray
    h: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.mean(self.h))

    @property
    def variation(self) -> float:
        """(max - min) / mean along the vessel."""
        return float((self.h.max() - self.h.min()) / self.h.mean())


class _Layout:
    """Unknown numbering for the staggered system."""

    def __init__(self, fluid: np.ndarray):
        n_lumen, nz = fluid.shape
        self.u_active = np.zeros((n_lumen, nz + 1), dtype=bool)
        self.u_active[:, 0] = fluid[:, 0]
        self.u_active[:, nz] = fluid[:, -1]
        self.u_active[:, 1:nz] = fluid[:, :-1] & fluid[:, 1:]
        self.w_active = np.zeros((n_lumen + 1, nz), dtype=bool)
        self.w_active[1:n_lumen, :] = fluid[:-1, :] & fluid[1:, :]
        self.p_active = fluid

        self.nu = int(self.u_active.sum())
        self.nw = int(self.w_active.sum())
        self.np = int(fluid.sum())
        self.u_id = -np.ones(self.u_active.shape, dtype=int)
        self.u_id[self.u_active] = np.arange(self.nu)
        self.w_id = -np.ones(self.w_active.shape, dtype=int)
        self.w_id[self.w_active] = self.nu + np.arange(self.nw)
        self.p_id = -np.ones(fluid.shape, dtype=int)
        self.p_id[fluid] = self.nu + self.nw + np.arange(self.np)

    @property
    def size(self) -> int:
        return self.nu + self.nw + self.np


def _assemble_stokes(mesh: AxiMesh) -> Tuple[sparse.csr_matrix, np.ndarray, _Layout]:
    """Scaled Stokes system [[K, G], [G^T, 0]] with unit pressure drop per unit length."""
    n_lumen, nz = mesh.n_lumen, mesh.nz
    rn = mesh.r_nodes[:n_lumen + 1] / LENGTH_SCALE
    zn = mesh.z_nodes / LENGTH_SCALE
    rc = 0.5 * (rn[1:] + rn[:-1])
    zc = 0.5 * (zn[1:] + zn[:-1])
    dz = np.diff(zn)
    az = math.pi * (rn[1:] ** 2 - rn[:-1] ** 2)
    p_in, p_out = zn[-1] - zn[0], 0.0

    layout = _Layout(mesh.fluid[:n_lumen, :])
    u_active, w_active = layout.u_active, layout.w_active
    u_id, w_id, p_id = layout.u_id, layout.w_id, layout.p_id
    rows, cols, vals = [], [], []
    rhs = np.zeros(layout.size)

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    # axial momentum on axial faces
    for i, jf in zip(*np.nonzero(u_active)):
        row = u_id[i, jf]
        if jf == 0:
            hz = 0.5 * dz[0]
        elif jf == nz:
            hz = 0.5 * dz[-1]
        else:
            hz = zc[jf] - zc[jf - 1]
        diag = 0.0

        area = 2.0 * math.pi * rn[i + 1] * hz
        if i + 1 < n_lumen and u_active[i + 1, jf]:
            a = area / (rc[i + 1] - rc[i])
            diag += a
            add(row, u_id[i + 1, jf], -a)
        else:
            diag += area / (rn[i + 1] - rc[i])
        if i > 0:
            area = 2.0 * math.pi * rn[i] * hz
            if u_active[i - 1, jf]:
                a = area / (rc[i] - rc[i - 1])
                diag += a
                add(row, u_id[i - 1, jf], -a)
            else:
                diag += area / (rc[i] - rn[i])

        # traction-free ends: no axial viscous flux through the inlet or outlet plane
        if jf < nz:
            a = az[i] / dz[jf]
            diag += a
            if u_active[i, jf + 1]:
                add(row, u_id[i, jf + 1], -a)
        if jf > 0:
            a = az[i] / dz[jf - 1]
            diag += a
            if u_active[i, jf - 1]:
                add(row, u_id[i, jf - 1], -a)
        add(row, row, diag)

        if jf < nz:
            add(row, p_id[i, jf], az[i])
            add(p_id[i, jf], row, az[i])
        else:
            rhs[row] -= az[i] * p_out
        if jf > 0:
            add(row, p_id[i, jf - 1], -az[i])
            add(p_id[i, jf - 1], row, -az[i])
        else:
            rhs[row] += az[i] * p_in

    # radial momentum on radial faces
    for k, j in zip(*np.nonzero(w_active)):
        row = w_id[k, j]
        aw = math.pi * (rc[k] ** 2 - rc[k - 1] ** 2)
        diag = aw * dz[j] / rn[k] ** 2

        a = 2.0 * math.pi * rc[k] * dz[j] / (rn[k + 1] - rn[k])
        diag += a
        if w_active[k + 1, j]:
            add(row, w_id[k + 1, j], -a)
        a = 2.0 * math.pi * rc[k - 1] * dz[j] / (rn[k] - rn[k - 1])
        diag += a
        if w_active[k - 1, j]:
            add(row, w_id[k - 1, j], -a)

        if j < nz - 1:
            if w_active[k, j + 1]:
                a = aw / (zc[j + 1] - zc[j])
                add(row, w_id[k, j + 1], -a)
            else:
                a = aw / (zn[j + 1] - zc[j])
            diag += a
        if j > 0:
            if w_active[k, j - 1]:
                a = aw / (zc[j] - zc[j - 1])
                add(row, w_id[k, j - 1], -a)
            else:
                a = aw / (zc[j] - zn[j])
            diag += a
        else:
            diag += aw / (zc[0] - zn[0])  # no radial inflow at the inlet
        add(row, row, diag)

        ar = 2.0 * math.pi * rn[k] * dz[j]
        add(row, p_id[k, j], ar)
        add(p_id[k, j], row, ar)
        add(row, p_id[k - 1, j], -ar)
        add(p_id[k - 1, j], row, -ar)

    matrix = sparse.coo_matrix((vals, (rows, cols)), shape=(layout.size, layout.size)).tocsr()
    return matrix, rhs, layout


def _solve_scaled(mesh: AxiMesh) -> Tuple[np.ndarray, _Layout, float]:
    matrix, rhs, layout = _assemble_stokes(mesh)
    logger.debug("Stokes system: %d unknowns (%d u, %d w, %d p), %d non-zeros",
                 layout.size, layout.nu, layout.nw, layout.np, matrix.nnz)
    lu = splu(matrix.tocsc())
    x = lu.solve(rhs)
    norm = np.linalg.norm(rhs)
    residual = np.linalg.norm(rhs - matrix @ x) / norm
    for _ in range(REFINEMENT_STEPS):
        if residual < 1e-14:
            break
        x = x + lu.solve(rhs - matrix @ x)
        residual = np.linalg.norm(rhs - matrix @ x) / norm
    if not np.all(np.isfinite(x)):
        raise ConvergenceError("flow", REFINEMENT_STEPS, float('nan'), "linear solve failed")
    return x, layout, float(residual)


def solve_flow(mesh: AxiMesh, cfg: ScenarioConfig) -> FlowField:
    n_lumen, nz = mesh.n_lumen, mesh.nz
    dP = cfg.pressure_gradient
    vz = np.zeros((n_lumen, nz + 1))
    vr = np.zeros((n_lumen + 1, nz))
    pressure = np.full((n_lumen, nz), np.nan)
    residual = 0.0

    if dP > 0:
        x, layout, residual = _solve_scaled(mesh)
        velocity_scale = dP * LENGTH_SCALE ** 2 / cfg.fluid.viscosity
        vz[layout.u_active] = x[layout.u_id[layout.u_active]] * velocity_scale
        vr[layout.w_active] = x[layout.w_id[layout.w_active]] * velocity_scale
        pressure[layout.p_active] = x[layout.p_id[layout.p_active]] * dP * LENGTH_SCALE
    else:
        pressure[mesh.fluid[:n_lumen, :]] = 0.0

    area_z = mesh.axial_area[:n_lumen]
    flow_z = np.zeros((mesh.nr, nz + 1))
    flow_z[:n_lumen, :] = vz * area_z[:, None]
    flow_r = np.zeros((mesh.nr + 1, nz))
    flow_r[:n_lumen + 1, :] = vr * mesh.radial_area()[:n_lumen + 1, :]

    psi = np.zeros((n_lumen + 1, nz + 1))
    psi[1:, :] = np.cumsum(flow_z[:n_lumen, :], axis=0)
    total = float(psi[-1, 0])

    net = (flow_z[:n_lumen, 1:] - flow_z[:n_lumen, :-1]
           + flow_r[1:n_lumen + 1, :] - flow_r[:n_lumen, :])
    fluid = mesh.fluid[:n_lumen, :]
    divergence = float(np.abs(net[fluid]).max() / total) if total > 0 else 0.0
    if divergence > cfg.solver.flow_tolerance:
        raise ConvergenceError("flow", REFINEMENT_STEPS, divergence, "mass imbalance above tolerance")

    R = cfg.vessel_radius
    field = FlowField(
        vz=vz, vr=vr, pressure=pressure, psi=psi, flow_r=flow_r, flow_z=flow_z,
        n_lumen=n_lumen, pressure_gradient=dP, total_flow=total,
        v_avg=total / (math.pi * R ** 2), divergence_residual=divergence, linear_residual=residual,
    )
    logger.info("Flow: Q=%.4e m^3/s, v_avg=%.4f mm/s (%.1f%% of Poiseuille), divergence %.1e",
                total, field.v_avg * 1e3, 100.0 * flow_reduction_ratio(field, cfg), divergence)
    return field


def flow_reduction_ratio(flow: FlowField, cfg: ScenarioConfig) -> float:
    """Volumetric flow relative to the robot-free tube at the same gradient."""
    reference = derived_quantities(cfg).volumetric_flow
    return flow.total_flow / reference if reference > 0 else 1.0


# ---------------------------------------------------------------------------
# Wall force
# ---------------------------------------------------------------------------

def _face_pressure(flow: FlowField, mesh: AxiMesh, i: int, j: int, step: int, z_face: float) -> float:
    """Pressure at an end face, linearly extrapolated from two upstream/downstream cells."""
    p1 = flow.pressure[i, j]
    j2 = j + step
    if 0 <= j2 < mesh.nz and np.isfinite(flow.pressure[i, j2]):
        p2 = flow.pressure[i, j2]
        z1, z2 = mesh.zc[j], mesh.zc[j2]
        return p1 + (p1 - p2) * (z_face - z1) / (z1 - z2)
    return p1


def wall_force(flow: FlowField, mesh: AxiMesh, cfg: ScenarioConfig) -> WallForce:
    """Axial force of the flow on all robots (pressure on end faces, shear on the cylinder)."""
    faces = mesh.boundary_faces(BoundaryTag.ROBOT_PLASMA_FACE)
    eta = cfg.fluid.viscosity
    _, vz_cell = flow.cell_velocity()
    shear = 0.0
    push = 0.0
    for k in range(faces.size):
        i, j = faces.i[k], faces.j[k]
        if faces.axis[k] == 0:
            shear += eta * vz_cell[i, j] / faces.distance[k] * faces.area[k]
        else:
            upstream = faces.partner_j[k] > j
            step = -1 if upstream else 1
            p_face = _face_pressure(flow, mesh, i, j, step, faces.z[k])
            push += (p_face if upstream else -p_face) * faces.area[k]

    total = shear + push
    robots = max(mesh.ring_count * cfg.robot.robots_per_ring, 1)
    dP = flow.pressure_gradient
    return WallForce(
        total=total, per_robot=total / robots,
        coefficient=total / dP if dP > 0 else 0.0, shear=shear, pressure=push,
    )


# ---------------------------------------------------------------------------
# Cell core boundary
# ---------------------------------------------------------------------------

def _radius_for_flow(psi_col: np.ndarray, vz_col: np.ndarray, r_nodes: np.ndarray, target: float) -> float:
    """Radius enclosing volumetric flow `target`, assuming uniform v_z within each cell."""
    above = np.flatnonzero(psi_col[1:] >= target)
    if above.size == 0:
        return math.nan
    i = int(above[0])
    deficit = target - psi_col[i]
    if vz_col[i] > 0:
        return math.sqrt(r_nodes[i] ** 2 + deficit / (math.pi * vz_col[i]))
    span = psi_col[i + 1] - psi_col[i]
    frac = deficit / span if span > 0 else 0.0
    return r_nodes[i] + frac * (r_nodes[i + 1] - r_nodes[i])


def _flow_within(vz_col: np.ndarray, r_nodes: np.ndarray, radius: float) -> float:
    area = math.pi * (np.minimum(r_nodes[1:], radius) ** 2 - np.minimum(r_nodes[:-1], radius) ** 2)
    return float(np.sum(vz_col * np.maximum(area, 0.0)))


def trace_core_boundary(flow: FlowField, mesh: AxiMesh, cfg: ScenarioConfig) -> CoreBoundary:
    """Stream-function iso-contour through (z=0, r=R-inlet_gap)."""
    gap = derived_quantities(cfg).inlet_gap
    r_nodes = mesh.r_nodes[:flow.n_lumen + 1]
    r_start = cfg.vessel_radius - gap
    target = _flow_within(flow.vz[:, 0], r_nodes, r_start)
    if not target > 0:
        raise MeshError("no flow inside the core start radius; cannot trace the cell core")

    radius = np.empty(mesh.nz + 1)
    for jf in range(mesh.nz + 1):
        radius[jf] = _radius_for_flow(flow.psi[:, jf], flow.vz[:, jf], r_nodes, target)
        if not np.isfinite(radius[jf]):
            raise MeshError(f"core streamline exits the lumen at z={mesh.z_nodes[jf]:.4e} m")
    radius[0] = r_start

    for j in mesh.robot_band_columns():
        for jf in (j, j + 1):
            if radius[jf] >= mesh.robot_inner_radius:
                raise MeshError(
                    f"core radius {radius[jf]:.4e} m reaches the robots at z={mesh.z_nodes[jf]:.4e} m"
                )
    if np.any(radius <= 0):
        raise MeshError("core radius collapsed to the axis")

    boundary = CoreBoundary(z=mesh.z_nodes.copy(), radius=radius, inlet_gap=gap, core_flow=target)
    logger.info("Core boundary: inlet gap %.3f um, minimum radius %.3f um",
                gap * 1e6, radius.min() * 1e6)
    return boundary


def with_core_speed(flow: FlowField, boundary: CoreBoundary) -> FlowField:
    return replace(flow, v_avg_cell=boundary.core_flow / (math.pi * boundary.radius[0] ** 2))


def hematocrit_ratio(hematocrit: float, vessel_radius: float, v_avg: float,
                     core_radius: float, v_avg_cell: float) -> float:
    """Core hematocrit h = H R^2 v_avg / (R_cell^2 v_avg_cell)."""
    return hematocrit * vessel_radius ** 2 * v_avg / (core_radius ** 2 * v_avg_cell)


def core_hematocrit(cfg: ScenarioConfig, flow: FlowField, boundary: CoreBoundary,
                    mesh: AxiMesh) -> HematocritProfile:
    """h at every cell column, from the cell-centred flow inside R_cell(z)."""
    r_nodes = mesh.r_nodes[:flow.n_lumen + 1]
    _, vz_cell = flow.cell_velocity()
    radius = boundary.radius_at(mesh.zc)
    h = np.empty(mesh.nz)
    for j in range(mesh.nz):
        core_flow = _flow_within(vz_cell[:, j], r_nodes, radius[j])
        v_cell = core_flow / (math.pi * radius[j] ** 2)
        h[j] = hematocrit_ratio(cfg.hematocrit, cfg.vessel_radius, flow.v_avg, radius[j], v_cell)
    return HematocritProfile(z=mesh.zc.copy(), h=h)
