"""Cell-centred finite-volume operators on an AxiMesh.

Internal faces are described by owner/neighbour pairs (P, N) with P the cell at the
lower index along the face normal. Flows and conductances are stored per face:
radial faces as shape (nr + 1, nz), axial faces as shape (nr, nz + 1); entries on the
domain boundary are ignored here and handled by the callers.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from physics.mesh import AxiMesh, FaceSet


@dataclass(frozen=True, eq=False)
class FacePairs:
    p: np.ndarray
    n: np.ndarray
    d_p: np.ndarray  # owner centre to face
    d_n: np.ndarray  # face to neighbour centre


@lru_cache(maxsize=8)
def face_pairs(mesh: AxiMesh) -> Tuple[FacePairs, FacePairs]:
    nr, nz = mesh.shape
    rc, zc = mesh.rc, mesh.zc
    ii, jj = np.meshgrid(np.arange(1, nr), np.arange(nz), indexing='ij')
    radial = FacePairs(
        p=((ii - 1) * nz + jj).ravel(),
        n=(ii * nz + jj).ravel(),
        d_p=np.broadcast_to((mesh.r_nodes[1:-1] - rc[:-1])[:, None], ii.shape).ravel(),
        d_n=np.broadcast_to((rc[1:] - mesh.r_nodes[1:-1])[:, None], ii.shape).ravel(),
    )
    ii, jj = np.meshgrid(np.arange(nr), np.arange(1, nz), indexing='ij')
    axial = FacePairs(
        p=(ii * nz + jj - 1).ravel(),
        n=(ii * nz + jj).ravel(),
        d_p=np.broadcast_to((mesh.z_nodes[1:-1] - zc[:-1])[None, :], ii.shape).ravel(),
        d_n=np.broadcast_to((zc[1:] - mesh.z_nodes[1:-1])[None, :], ii.shape).ravel(),
    )
    return radial, axial


def _internal(values_r: np.ndarray, values_z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return values_r[1:-1, :].ravel(), values_z[:, 1:-1].ravel()


def harmonic_conductances(mesh: AxiMesh, coeff: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Face conductances A / (d_P/k_P + d_N/k_N); zero where either cell has k = 0."""
    radial, axial = face_pairs(mesh)
    k = coeff.ravel()
    g_r = np.zeros((mesh.nr + 1, mesh.nz))
    g_z = np.zeros((mesh.nr, mesh.nz + 1))
    area_r = mesh.radial_area()[1:-1, :].ravel()
    area_z = np.broadcast_to(mesh.axial_area[:, None], (mesh.nr, mesh.nz - 1)).ravel()

    for pairs, area, out in ((radial, area_r, g_r[1:-1, :]), (axial, area_z, g_z[:, 1:-1])):
        kp, kn = k[pairs.p], k[pairs.n]
        active = (kp > 0) & (kn > 0)
        g = np.zeros(pairs.p.size)
        g[active] = area[active] / (pairs.d_p[active] / kp[active] + pairs.d_n[active] / kn[active])
        out[...] = g.reshape(out.shape)
    return g_r, g_z


def conductance_matrix(mesh: AxiMesh, g_r: np.ndarray, g_z: np.ndarray) -> sparse.csr_matrix:
    radial, axial = face_pairs(mesh)
    gr, gz = _internal(g_r, g_z)
    p = np.concatenate([radial.p, axial.p])
    n = np.concatenate([radial.n, axial.n])
    g = np.concatenate([gr, gz])
    rows = np.concatenate([p, n, p, n])
    cols = np.concatenate([p, n, n, p])
    vals = np.concatenate([g, g, -g, -g])
    size = mesh.cell_count
    return sparse.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()


def upwind_convection_matrix(mesh: AxiMesh, flow_r: np.ndarray, flow_z: np.ndarray,
                             factor: np.ndarray) -> sparse.csr_matrix:
    """Net convective outflow operator; `factor` scales the carried quantity per cell."""
    radial, axial = face_pairs(mesh)
    fr, fz = _internal(flow_r, flow_z)
    p = np.concatenate([radial.p, axial.p])
    n = np.concatenate([radial.n, axial.n])
    q = np.concatenate([fr, fz])
    f = factor.ravel()

    forward = np.maximum(q, 0.0) * f[p]
    backward = np.minimum(q, 0.0) * f[n]
    rows = np.concatenate([p, n, n, p])
    cols = np.concatenate([p, p, n, n])
    vals = np.concatenate([forward, -forward, -backward, backward])
    size = mesh.cell_count
    return sparse.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()


def convective_correction(mesh: AxiMesh, flow_r: np.ndarray, flow_z: np.ndarray,
                          factor: np.ndarray, field: np.ndarray) -> np.ndarray:
    """Central-minus-upwind face flux, summed as net outflow per cell."""
    radial, axial = face_pairs(mesh)
    fr, fz = _internal(flow_r, flow_z)
    carried = (factor * field).ravel()
    out = np.zeros(mesh.cell_count)
    for pairs, q in ((radial, fr), (axial, fz)):
        vp, vn = carried[pairs.p], carried[pairs.n]
        central = vp + (vn - vp) * pairs.d_p / (pairs.d_p + pairs.d_n)
        upwind = np.where(q >= 0.0, vp, vn)
        delta = q * (central - upwind)
        np.add.at(out, pairs.p, delta)
        np.add.at(out, pairs.n, -delta)
    return out


def face_conductance(faces: FaceSet, coeff: np.ndarray) -> np.ndarray:
    """Per-face conductance k A / d from the owner cell centre to the face."""
    k = coeff[faces.i, faces.j]
    return k * faces.area / faces.distance


def accumulate(mesh: AxiMesh, faces: FaceSet, values: np.ndarray) -> np.ndarray:
    """Scatter per-face values onto their owner cells."""
    out = np.zeros(mesh.cell_count)
    np.add.at(out, mesh.index(faces.i, faces.j), values)
    return out


def solve_linear(matrix: sparse.spmatrix, rhs: np.ndarray) -> np.ndarray:
    solution = spsolve(matrix.tocsc(), rhs)
    if not np.all(np.isfinite(solution)):
        raise FloatingPointError("linear solve returned non-finite values")
    return solution
