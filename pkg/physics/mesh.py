"""Structured axisymmetric (r, z) mesh of vessel lumen, robot rings and tissue annulus."""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum, IntEnum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import MeshError
from utils.scenario import ScenarioConfig, derived_quantities

logger = logging.getLogger(__name__)


class Region(IntEnum):
    """Region tag of a cell."""
    CORE_FLUID = 0
    PLASMA_SLEEVE = 1
    ROBOT_INTERIOR = 2
    TISSUE = 3


class BoundaryTag(Enum):
    AXIS = "axis"
    INLET = "inlet"
    OUTLET = "outlet"
    VESSEL_WALL = "vessel_wall"
    ROBOT_PLASMA_FACE = "robot_plasma_face"
    TISSUE_OUTER = "tissue_outer"
    TISSUE_ENDS = "tissue_ends"


@dataclass(frozen=True, eq=False)
class FaceSet:
    """Faces owned by one cell each.

    For interfaces (vessel wall, robot faces) the owner is the fluid-side cell and
    `partner_*` names the cell across the face; domain boundaries have partner -1.
    `axis` is 0 for faces normal to r and 1 for faces normal to z.
    """
    tag: BoundaryTag
    i: np.ndarray
    j: np.ndarray
    axis: np.ndarray
    area: np.ndarray
    distance: np.ndarray
    r: np.ndarray
    z: np.ndarray
    ring: np.ndarray
    partner_i: np.ndarray
    partner_j: np.ndarray

    @property
    def size(self) -> int:
        return int(self.i.size)

    def subset(self, mask: np.ndarray) -> 'FaceSet':
        return replace(self, **{
            name: getattr(self, name)[mask]
            for name in ('i', 'j', 'axis', 'area', 'distance', 'r', 'z', 'ring', 'partner_i', 'partner_j')
        })


@dataclass(frozen=True, eq=False)
class CoreBoundary:
    """Cell-core radius R_cell(z), piecewise linear between axial mesh nodes."""
    z: np.ndarray
    radius: np.ndarray
    inlet_gap: float
    core_flow: float  # volumetric flow inside the curve, m^3/s

    def radius_at(self, z) -> np.ndarray:
        return np.interp(z, self.z, self.radius)


@dataclass(frozen=True, eq=False)
class AxiMesh:
    """Tensor-product grid. Cell (i, j) spans r_nodes[i:i+2] x z_nodes[j:j+2]."""
    r_nodes: np.ndarray
    z_nodes: np.ndarray
    region: np.ndarray
    ring_id: np.ndarray
    n_lumen: int
    vessel_radius: float
    robot_inner_radius: float
    ring_spans: Tuple[Tuple[float, float], ...]
    shell_radius: Optional[float] = None
    core_boundary: Optional[CoreBoundary] = None

    # -- geometry -----------------------------------------------------------
    @property
    def nr(self) -> int:
        return self.r_nodes.size - 1

    @property
    def nz(self) -> int:
        return self.z_nodes.size - 1

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nr, self.nz)

    @property
    def cell_count(self) -> int:
        return self.nr * self.nz

    @property
    def node_count(self) -> int:
        return self.r_nodes.size * self.z_nodes.size

    @property
    def rc(self) -> np.ndarray:
        return 0.5 * (self.r_nodes[1:] + self.r_nodes[:-1])

    @property
    def zc(self) -> np.ndarray:
        return 0.5 * (self.z_nodes[1:] + self.z_nodes[:-1])

    @property
    def dr(self) -> np.ndarray:
        return np.diff(self.r_nodes)

    @property
    def dz(self) -> np.ndarray:
        return np.diff(self.z_nodes)

    @property
    def ring_count(self) -> int:
        return len(self.ring_spans)

    @property
    def axial_area(self) -> np.ndarray:
        """Area of faces normal to z for each radial cell, pi (r+^2 - r-^2)."""
        return math.pi * (self.r_nodes[1:] ** 2 - self.r_nodes[:-1] ** 2)

    @property
    def volume(self) -> np.ndarray:
        """Cell volumes 2 pi r dr dz, shape (nr, nz)."""
        return np.outer(self.axial_area, self.dz)

    def radial_area(self) -> np.ndarray:
        """Area of faces normal to r, shape (nr + 1, nz)."""
        return 2.0 * math.pi * np.outer(self.r_nodes, self.dz)

    def index(self, i, j):
        return np.asarray(i) * self.nz + np.asarray(j)

    # -- regions ------------------------------------------------------------
    def mask(self, *regions: Region) -> np.ndarray:
        return np.isin(self.region, [int(r) for r in regions])

    @property
    def fluid(self) -> np.ndarray:
        return self.mask(Region.CORE_FLUID, Region.PLASMA_SLEEVE)

    @property
    def robot(self) -> np.ndarray:
        return self.mask(Region.ROBOT_INTERIOR)

    @property
    def tissue(self) -> np.ndarray:
        return self.mask(Region.TISSUE)

    def region_volume(self, *regions: Region) -> float:
        return float(self.volume[self.mask(*regions)].sum())

    def robot_band_columns(self) -> np.ndarray:
        """Axial cell indices covered by any robot."""
        return np.flatnonzero(self.robot.any(axis=0))

    def mid_aggregate_z(self) -> float:
        if not self.ring_spans:
            return 0.5 * (self.z_nodes[0] + self.z_nodes[-1])
        return 0.5 * (self.ring_spans[0][0] + self.ring_spans[-1][1])

    def column_at(self, z: float) -> int:
        return int(np.clip(np.searchsorted(self.z_nodes, z) - 1, 0, self.nz - 1))

    def with_core_boundary(self, boundary: CoreBoundary) -> 'AxiMesh':
        """Retag lumen fluid cells as core or sleeve against the traced R_cell(z)."""
        region = self.region.copy()
        fluid = self.fluid
        r_cell = boundary.radius_at(self.zc)
        core = self.rc[:, None] < r_cell[None, :]
        region[fluid & core] = Region.CORE_FLUID
        region[fluid & ~core] = Region.PLASMA_SLEEVE
        return replace(self, region=region, core_boundary=boundary)

    # -- faces --------------------------------------------------------------
    def boundary_faces(self, tag: BoundaryTag) -> FaceSet:
        if tag is BoundaryTag.ROBOT_PLASMA_FACE:
            return self._robot_faces()
        builders = {
            BoundaryTag.AXIS: self._axis_faces,
            BoundaryTag.INLET: lambda: self._end_faces(0, fluid=True),
            BoundaryTag.OUTLET: lambda: self._end_faces(self.nz - 1, fluid=True),
            BoundaryTag.TISSUE_ENDS: self._tissue_end_faces,
            BoundaryTag.TISSUE_OUTER: self._tissue_outer_faces,
            BoundaryTag.VESSEL_WALL: self._vessel_wall_faces,
        }
        return builders[tag]()

    def _faces(self, tag, i, j, axis, area, distance, r, z, ring=None, pi=None, pj=None) -> FaceSet:
        n = np.asarray(i).size
        minus = -np.ones(n, dtype=int)
        return FaceSet(
            tag=tag,
            i=np.asarray(i, dtype=int), j=np.asarray(j, dtype=int),
            axis=np.full(n, axis, dtype=int) if np.isscalar(axis) else np.asarray(axis, dtype=int),
            area=np.asarray(area, dtype=float), distance=np.asarray(distance, dtype=float),
            r=np.asarray(r, dtype=float), z=np.asarray(z, dtype=float),
            ring=minus.copy() if ring is None else np.asarray(ring, dtype=int),
            partner_i=minus.copy() if pi is None else np.asarray(pi, dtype=int),
            partner_j=minus.copy() if pj is None else np.asarray(pj, dtype=int),
        )

    def _axis_faces(self) -> FaceSet:
        j = np.arange(self.nz)
        return self._faces(BoundaryTag.AXIS, np.zeros_like(j), j, 0, np.zeros(self.nz),
                           np.full(self.nz, self.rc[0]), np.zeros(self.nz), self.zc)

    def _end_faces(self, j_cell: int, fluid: bool) -> FaceSet:
        tag = BoundaryTag.INLET if j_cell == 0 else BoundaryTag.OUTLET
        column = self.fluid[:, j_cell] if fluid else self.tissue[:, j_cell]
        i = np.flatnonzero(column)
        z_face = self.z_nodes[0] if j_cell == 0 else self.z_nodes[-1]
        return self._faces(tag, i, np.full(i.size, j_cell), 1, self.axial_area[i],
                           np.full(i.size, 0.5 * self.dz[j_cell]), self.rc[i], np.full(i.size, z_face))

    def _tissue_end_faces(self) -> FaceSet:
        parts = [self._end_faces(0, fluid=False), self._end_faces(self.nz - 1, fluid=False)]
        return self._faces(
            BoundaryTag.TISSUE_ENDS,
            np.concatenate([p.i for p in parts]), np.concatenate([p.j for p in parts]), 1,
            np.concatenate([p.area for p in parts]), np.concatenate([p.distance for p in parts]),
            np.concatenate([p.r for p in parts]), np.concatenate([p.z for p in parts]),
        )

    def _tissue_outer_faces(self) -> FaceSet:
        j = np.arange(self.nz)
        i = np.full(self.nz, self.nr - 1)
        r_out = self.r_nodes[-1]
        return self._faces(BoundaryTag.TISSUE_OUTER, i, j, 0, 2.0 * math.pi * r_out * self.dz,
                           np.full(self.nz, r_out - self.rc[-1]), np.full(self.nz, r_out), self.zc)

    def _vessel_wall_faces(self) -> FaceSet:
        i_in = self.n_lumen - 1
        j = np.flatnonzero(self.fluid[i_in, :])
        R = self.r_nodes[self.n_lumen]
        return self._faces(
            BoundaryTag.VESSEL_WALL, np.full(j.size, i_in), j, 0, 2.0 * math.pi * R * self.dz[j],
            np.full(j.size, R - self.rc[i_in]), np.full(j.size, R), self.zc[j],
            pi=np.full(j.size, self.n_lumen), pj=j,
        )

    def _robot_faces(self) -> FaceSet:
        robot, fluid = self.robot, self.fluid
        rows = []  # (owner_i, owner_j, axis, area, distance, r, z, ring, partner_i, partner_j)

        ii, jj = np.nonzero(robot[1:, :] & fluid[:-1, :])
        ii = ii + 1  # robot cell index
        rf = self.r_nodes[ii]
        rows.append((ii - 1, jj, np.zeros(ii.size), 2.0 * math.pi * rf * self.dz[jj],
                     rf - self.rc[ii - 1], rf, self.zc[jj], self.ring_id[ii, jj], ii, jj))

        ii, jj = np.nonzero(robot[:, 1:] & fluid[:, :-1])
        jj = jj + 1
        zf = self.z_nodes[jj]
        rows.append((ii, jj - 1, np.ones(ii.size), self.axial_area[ii],
                     zf - self.zc[jj - 1], self.rc[ii], zf, self.ring_id[ii, jj], ii, jj))

        ii, jj = np.nonzero(robot[:, :-1] & fluid[:, 1:])
        zf = self.z_nodes[jj + 1]
        rows.append((ii, jj + 1, np.ones(ii.size), self.axial_area[ii],
                     self.zc[jj + 1] - zf, self.rc[ii], zf, self.ring_id[ii, jj], ii, jj))

        cols = [np.concatenate([row[k] for row in rows]) for k in range(10)]
        return self._faces(BoundaryTag.ROBOT_PLASMA_FACE, cols[0], cols[1], cols[2], cols[3], cols[4],
                           cols[5], cols[6], ring=cols[7], pi=cols[8], pj=cols[9])

    def robot_face_spacing(self) -> float:
        """Largest node spacing along any robot plasma-facing edge (0 without robots)."""
        faces = self._robot_faces()
        if faces.size == 0:
            return 0.0
        radial = faces.axis == 0
        spacing = np.where(radial, self.dz[faces.j], self.dr[faces.i])
        return float(spacing.max())


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def _distance_to_intervals(x: np.ndarray, intervals: Sequence[Tuple[float, float]]) -> List[np.ndarray]:
    return [np.maximum(np.maximum(a - x, x - b), 0.0) for a, b in intervals]


def graded_nodes(breaks: Sequence[float], spacing: Callable[[np.ndarray], np.ndarray],
                 samples: int = 4001) -> np.ndarray:
    """Nodes on [breaks[0], breaks[-1]] including every break, with local spacing <= spacing(x)."""
    nodes = [float(breaks[0])]
    for a, b in zip(breaks[:-1], breaks[1:]):
        x = np.linspace(a, b, samples)
        density = 1.0 / spacing(x)
        cumulative = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(x))])
        n = max(1, int(math.ceil(cumulative[-1] * (1.0 + 1e-9))))
        s = np.linspace(0.0, cumulative[-1], n + 1)
        seg = np.interp(s, cumulative, x)
        seg[-1] = b
        nodes.extend(seg[1:].tolist())
    return np.asarray(nodes)


def _spacing_function(refined: Sequence[Tuple[float, float, float]], growth: float,
                      ceiling: Callable[[np.ndarray], np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
    """Spacing that grows linearly (geometric cell growth) away from refined intervals."""
    def spacing(x: np.ndarray) -> np.ndarray:
        h = ceiling(x)
        for (a, b, h0), d in zip(refined, _distance_to_intervals(x, [(a, b) for a, b, _ in refined])):
            h = np.minimum(h, h0 + (growth - 1.0) * d)
        return h
    return spacing


def shell_thickness(cfg: ScenarioConfig) -> float:
    """Radial thickness next to the plasma face holding `shell_fraction` of the robot volume."""
    R, size, f = cfg.vessel_radius, cfg.robot.size, cfg.robot.shell_fraction
    inner = R - size
    if f <= 0.0 or f >= 1.0:
        return size
    return math.sqrt(inner ** 2 + f * (R ** 2 - inner ** 2)) - inner


def build_mesh(cfg: ScenarioConfig) -> AxiMesh:
    derived = derived_quantities(cfg)
    mp = cfg.mesh
    R, Rt, L = cfg.vessel_radius, cfg.tissue_radius, cfg.vessel_length
    size = cfg.robot.size
    rings = cfg.robot.ring_count
    h_face = derived.face_spacing
    g = mp.growth

    spans = tuple((z0, z0 + size) for z0 in derived.ring_starts)
    inner = R - size

    # radial nodes
    r_breaks = [0.0, R, Rt]
    r_refined = [(R, R, mp.wall_spacing)]
    shell_radius = None
    if rings > 0:
        r_breaks = [0.0, inner, R, Rt]
        r_refined.append((inner, R, h_face))
        if 0.0 < cfg.robot.shell_fraction < 1.0:
            t = shell_thickness(cfg)
            shell_radius = inner + t
            r_breaks.insert(2, shell_radius)
            r_refined.append((inner, shell_radius, min(h_face, t / 3.0)))

    def r_ceiling(x):
        return np.where(x < R, mp.max_radial_spacing, mp.max_tissue_spacing)

    r_nodes = graded_nodes(sorted(set(r_breaks)), _spacing_function(r_refined, g, r_ceiling))

    # axial nodes
    z_breaks = sorted({0.0, L, *[z for span in spans for z in span]})
    z_refined = [(a, b, h_face) for a, b in spans]

    def z_ceiling(x):
        return np.full_like(x, mp.max_axial_spacing)

    z_nodes = graded_nodes(z_breaks, _spacing_function(z_refined, g, z_ceiling))

    nr, nz = r_nodes.size - 1, z_nodes.size - 1
    if nr * nz > mp.max_cells:
        raise MeshError(
            f"refinement needs {nr * nz} cells ({nr} x {nz}), budget is {mp.max_cells}; "
            f"raise mesh.max_cells or coarsen mesh.face_spacing"
        )

    rc = 0.5 * (r_nodes[1:] + r_nodes[:-1])
    zc = 0.5 * (z_nodes[1:] + z_nodes[:-1])
    n_lumen = int(np.searchsorted(r_nodes, R - 1e-15 * R))
    if not math.isclose(r_nodes[n_lumen], R, rel_tol=1e-12):
        raise MeshError("vessel wall is not a mesh line")

    region = np.full((nr, nz), int(Region.TISSUE), dtype=np.int8)
    ring_id = -np.ones((nr, nz), dtype=int)
    lumen = rc < R
    core_radius = R - derived.inlet_gap
    region[lumen, :] = np.where(rc[lumen, None] < core_radius, int(Region.CORE_FLUID), int(Region.PLASMA_SLEEVE))

    band = lumen & (rc > inner)
    for k, (a, b) in enumerate(spans):
        in_span = (zc > a) & (zc < b)
        cells = band[:, None] & in_span[None, :]
        region[cells] = int(Region.ROBOT_INTERIOR)
        ring_id[cells] = k

    mesh = AxiMesh(
        r_nodes=r_nodes, z_nodes=z_nodes, region=region, ring_id=ring_id, n_lumen=n_lumen,
        vessel_radius=R, robot_inner_radius=inner if rings > 0 else R,
        ring_spans=spans, shell_radius=shell_radius,
    )

    if rings > 0:
        spacing = mesh.robot_face_spacing()
        if spacing > h_face * (1.0 + 1e-6):
            raise MeshError(f"robot face spacing {spacing:.3e} m exceeds target {h_face:.3e} m")

    logger.info("Mesh: %d x %d cells (%d nodes), %d rings, face spacing %.3g um",
                nr, nz, mesh.node_count, rings, h_face * 1e6)
    return mesh
