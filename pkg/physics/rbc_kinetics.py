"""Hemoglobin saturation: Hill equilibrium, lumped unloading rate and the 1D axial S(z) solve."""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from physics.mesh import AxiMesh, CoreBoundary, Region
from utils.errors import ConvergenceError
from utils.scenario import ScenarioConfig

logger = logging.getLogger(__name__)

S_FLOOR = 1.0e-9
S_CEILING = 1.0 - 1.0e-9
NEWTON_ITERATIONS = 60
NEWTON_TOLERANCE = 1.0e-12


def hill_equilibrium(a, n: float = 2.7):
    """S_eq = a^n / (1 + a^n)."""
    an = np.power(np.maximum(a, 0.0), n)
    return an / (1.0 + an)


def equilibrium_ratio(S, n: float = 2.7):
    """Inverse of the Hill curve: the ratio a at which S is the equilibrium saturation."""
    S = np.clip(S, S_FLOOR, S_CEILING)
    return np.power(S / (1.0 - S), 1.0 / n)


def partial_pressure_ratio(C, cfg: ScenarioConfig):
    """a = H_O2 C / P_half."""
    return cfg.oxygen.henry_ratio * np.asarray(C, dtype=float) / cfg.rbc.p_half


def unloading_function(a, S, n: float = 2.7):
    """s(a, S) >= 0; zero exactly on the equilibrium curve. S is clamped away from 0 and 1."""
    a = np.maximum(np.asarray(a, dtype=float), 0.0)
    S = np.clip(S, S_FLOOR, S_CEILING)
    return (2.0 * (1.0 - S) / (n + 1.0) * np.power(a, n + 1.0)
            - 2.0 * S * a
            + 2.0 * n / (n + 1.0) * np.power(S, 1.0 + 1.0 / n) / np.power(1.0 - S, 1.0 / n))


def unloading_rate(a, S, n: float = 2.7, unloading_time: float = 0.076):
    """dS/dt. Negative (unloading) when the plasma is below the cell equilibrium, positive above."""
    b = equilibrium_ratio(S, n)
    s = np.maximum(unloading_function(a, S, n), 0.0)
    return np.sign(np.asarray(a, dtype=float) - b) * np.sqrt(s) / unloading_time


def unloading_rate_derivatives(a, S, n: float = 2.7, unloading_time: float = 0.076):
    """(d rate / da, d rate / dS), with the analytic limit at equilibrium."""
    a = np.maximum(np.asarray(a, dtype=float), 0.0)
    S = np.clip(S, S_FLOOR, S_CEILING)
    b = equilibrium_ratio(S, n)
    bn = np.power(b, n)
    root = np.sqrt(np.maximum(unloading_function(a, S, n), 0.0))
    ds_da = 2.0 * (1.0 - S) * (np.power(a, n) - bn)
    ds_dS = -2.0 * ((np.power(a, n + 1.0) - np.power(b, n + 1.0)) / (n + 1.0) + (a - b))

    K = np.sqrt(n * np.power(b, n - 1.0) / (1.0 + bn))
    near = root < 1.0e-8
    safe = np.where(near, 1.0, root)
    d_da = np.where(near, K, np.abs(ds_da) / (2.0 * safe))
    d_dS = np.where(near, -(1.0 + bn) / np.maximum(K, 1e-300), np.sign(a - b) * ds_dS / (2.0 * safe))
    return d_da / unloading_time, d_dS / unloading_time


# ---------------------------------------------------------------------------
# 1D axial saturation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SaturationGrid:
    """Sub-cells of the 2D axial columns used by the saturation solve.

    `core_area[j]` is the discrete core cross-section of column j; `core_flow` the volumetric
    flow carried inside the core boundary.
    """
    z_nodes: np.ndarray
    column: np.ndarray
    core_area: np.ndarray
    core_flow: float
    columns: int

    @property
    def z(self) -> np.ndarray:
        return 0.5 * (self.z_nodes[1:] + self.z_nodes[:-1])

    @property
    def dz(self) -> np.ndarray:
        return np.diff(self.z_nodes)

    @property
    def size(self) -> int:
        return self.column.size

    def column_mean(self, values: np.ndarray) -> np.ndarray:
        """Length-weighted mean of a sub-cell quantity over each 2D column."""
        weighted = np.bincount(self.column, weights=values * self.dz, minlength=self.columns)
        length = np.bincount(self.column, weights=self.dz, minlength=self.columns)
        return weighted / length


def build_saturation_grid(mesh: AxiMesh, boundary: CoreBoundary, points: int) -> SaturationGrid:
    per_column = max(1, math.ceil(points / mesh.nz))
    nodes = [mesh.z_nodes[:1]]
    for j in range(mesh.nz):
        nodes.append(np.linspace(mesh.z_nodes[j], mesh.z_nodes[j + 1], per_column + 1)[1:])
    z_nodes = np.concatenate(nodes)
    column = np.repeat(np.arange(mesh.nz), per_column)

    core = mesh.mask(Region.CORE_FLUID)
    core_area = (mesh.volume * core).sum(axis=0) / mesh.dz
    return SaturationGrid(z_nodes=z_nodes, column=column, core_area=core_area,
                          core_flow=boundary.core_flow, columns=mesh.nz)


@dataclass(frozen=True, eq=False)
class SaturationState:
    """S(z) on the sub-cell grid with the driving plasma ratio a(z) and the local dS/dt."""
    z: np.ndarray
    S: np.ndarray
    a: np.ndarray
    rate: np.ndarray
    inlet: float
    iterations: int
    hill_n: float = 2.7

    @property
    def S_eq(self) -> np.ndarray:
        return hill_equilibrium(self.a, self.hill_n)

    @property
    def disequilibrium(self) -> np.ndarray:
        return self.S - self.S_eq

    @property
    def outlet(self) -> float:
        return float(self.S[-1])

    @property
    def minimum(self) -> float:
        return float(self.S.min())


def advance_saturation(grid: SaturationGrid, a_columns: np.ndarray, a_inlet: float,
                       cfg: ScenarioConfig, initial: Optional[np.ndarray] = None) -> SaturationState:
    """Steady Q dS/dz = D_heme A S'' + A dS/dt(a, S) by Newton iteration.

    `a_columns` holds the driving ratio per 2D column. Inlet S is the equilibrium of `a_inlet`;
    the outlet carries no diffusive flux.
    """
    n = cfg.rbc.hill_n
    t_u = cfg.rbc.unloading_time
    D = cfg.rbc.heme_diffusivity
    Q = grid.core_flow
    area = grid.core_area[grid.column]
    dz = grid.dz
    a = np.asarray(a_columns, dtype=float)[grid.column]
    S_in = float(np.clip(hill_equilibrium(a_inlet, n), S_FLOOR, S_CEILING))

    # diffusive conductances between sub-cells and to the inlet plane
    centre_gap = 0.5 * (dz[1:] + dz[:-1])
    g = D * 0.5 * (area[1:] + area[:-1]) / centre_gap
    g_in = D * area[0] / (0.5 * dz[0])
    volume = area * dz

    S = np.full(grid.size, S_in) if initial is None else np.clip(np.asarray(initial, dtype=float), S_FLOOR, S_CEILING)
    step = math.inf
    for iteration in range(1, NEWTON_ITERATIONS + 1):
        rate = unloading_rate(a, S, n, t_u)
        _, d_dS = unloading_rate_derivatives(a, S, n, t_u)

        upstream = np.concatenate([[S_in], S[:-1]])
        residual = Q * (S - upstream) - volume * rate
        residual[0] += g_in * (S[0] - S_in)
        diffusion = g * (S[1:] - S[:-1])
        residual[:-1] -= diffusion
        residual[1:] += diffusion

        diag = Q - volume * d_dS
        diag[0] += g_in
        diag[:-1] += g
        diag[1:] += g
        lower = -Q - g
        upper = -g

        bands = np.zeros((3, grid.size))
        bands[0, 1:] = upper
        bands[1, :] = diag
        bands[2, :-1] = lower
        delta = solve_banded((1, 1), bands, -residual)
        updated = np.clip(S + delta, S_FLOOR, S_CEILING)
        step = float(np.abs(updated - S).max())
        S = updated
        logger.debug("Saturation Newton %d: max step %.3e", iteration, step)
        if step < NEWTON_TOLERANCE:
            break
    else:
        raise ConvergenceError("saturation", NEWTON_ITERATIONS, step, "Newton iteration stalled")

    return SaturationState(z=grid.z, S=S, a=a, rate=unloading_rate(a, S, n, t_u),
                           inlet=S_in, iterations=iteration, hill_n=n)
