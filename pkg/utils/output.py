"""CSV writers for run products. Header row `name [unit]`, floats to 9 significant digits."""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from physics.oxygen_transport import assemble_sources, radial_section, tissue_power_profile
from utils.scenario import dump_scenario

logger = logging.getLogger(__name__)

Column = Tuple[str, str, np.ndarray]


def write_csv(path: Path, columns: Sequence[Column]) -> Path:
    """Write equal-length columns given as (name, unit, values)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ",".join(f"{name} [{unit}]" if unit else name for name, unit, _ in columns)
    data = np.column_stack([np.asarray(values, dtype=float).ravel() for _, _, values in columns]) \
        if columns and len(columns[0][2]) else np.empty((0, len(columns)))
    np.savetxt(path, data, fmt='%.9g', delimiter=',', header=header, comments='')
    logger.debug("Wrote %s (%d rows)", path, data.shape[0])
    return path


def _cell_grid(mesh) -> Tuple[np.ndarray, np.ndarray]:
    return np.meshgrid(mesh.rc, mesh.zc, indexing='ij')


def write_mesh(mesh, out_dir: Path) -> Path:
    r, z = _cell_grid(mesh)
    dr, dz = np.meshgrid(mesh.dr, mesh.dz, indexing='ij')
    return write_csv(out_dir / 'mesh.csv', [
        ('r', 'm', r), ('z', 'm', z), ('dr', 'm', dr), ('dz', 'm', dz),
        ('region', '', mesh.region), ('ring', '', mesh.ring_id),
    ])


def write_flow(mesh, flow, out_dir: Path) -> Path:
    n = flow.n_lumen
    r, z = _cell_grid(mesh)
    vr, vz = flow.cell_velocity()
    fluid = mesh.fluid[:n, :]
    return write_csv(out_dir / 'flow.csv', [
        ('r', 'm', r[:n][fluid]), ('z', 'm', z[:n][fluid]),
        ('v_r', 'm/s', vr[fluid]), ('v_z', 'm/s', vz[fluid]), ('p', 'Pa', flow.pressure[fluid]),
    ])


def write_concentration(field, out_dir: Path) -> Path:
    mesh = field.mesh
    r, z = _cell_grid(mesh)
    return write_csv(out_dir / 'concentration.csv', [
        ('r', 'm', r), ('z', 'm', z), ('region', '', mesh.region),
        ('C', 'molecule/m^3', field.C), ('plasma_fraction', '', field.phi),
        ('source', 'molecule/m^3/s', assemble_sources(field)),
    ])


def write_saturation(saturation, out_dir: Path) -> Path:
    return write_csv(out_dir / 'saturation.csv', [
        ('z', 'm', saturation.z), ('S', '', saturation.S), ('S_eq', '', saturation.S_eq),
        ('S_minus_S_eq', '', saturation.disequilibrium), ('a', '', saturation.a),
        ('dS_dt', '1/s', saturation.rate),
    ])


def write_radial_section(field, out_dir: Path) -> Path:
    section = radial_section(field)
    return write_csv(out_dir / 'radial_section.csv', [
        ('z', 'm', np.full(section.r.size, section.z)), ('r', 'm', section.r),
        ('region', '', section.region), ('C', 'molecule/m^3', section.C),
    ])


def write_tissue_power(field, cfg, out_dir: Path) -> Path:
    z, ratio = tissue_power_profile(field, cfg)
    return write_csv(out_dir / 'tissue_power.csv', [
        ('z', 'm', z), ('P_over_Pmax', '', ratio),
        ('P', 'W/m^3', ratio * cfg.tissue.max_power_density),
    ])


def write_ring_power(report, mesh, out_dir: Path, baseline=None) -> Path:
    rings = report.ring_power_pW.size
    columns: List[Column] = [
        ('ring', '', np.arange(1, rings + 1)),
        ('z_start', 'm', np.array([span[0] for span in mesh.ring_spans[:rings]], dtype=float)),
        ('uptake', 'molecule/s', report.ring_uptake),
        ('ring_power', 'pW', report.ring_power_pW),
        ('robot_power', 'pW', report.per_robot_pW),
    ]
    if baseline is not None:
        columns.append(('full_absorb_robot_power', 'pW', baseline.per_robot_pW))
    return write_csv(out_dir / 'ring_power.csv', columns)


def write_temperature(mesh, temperature, Q, out_dir: Path) -> Path:
    r, z = _cell_grid(mesh)
    return write_csv(out_dir / 'temperature.csv', [
        ('r', 'm', r), ('z', 'm', z), ('dT', 'K', temperature.dT), ('Q', 'W/m^3', Q),
    ])


def write_krogh(comparison, out_dir: Path) -> Path:
    return write_csv(out_dir / 'krogh.csv', [
        ('r', 'm', comparison.r), ('C_full', 'molecule/m^3', comparison.pde),
        ('C_krogh', 'molecule/m^3', comparison.krogh), ('relative_deviation', '', comparison.deviation),
    ])


def write_scenario(cfg, out_dir: Path) -> Path:
    path = Path(out_dir) / 'scenario.txt'
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_scenario(cfg), encoding='utf-8')
    return path


def write_run_outputs(context, out_dir: Path) -> List[Path]:
    """Every per-run CSV the context has products for."""
    out_dir = Path(out_dir)
    written = [write_scenario(context.cfg, out_dir)]
    if context.dump_mesh and context.mesh is not None:
        written.append(write_mesh(context.mesh, out_dir))
    if context.flow is not None:
        written.append(write_flow(context.mesh, context.flow, out_dir))
    field = context.concentration
    if field is not None:
        written.append(write_concentration(field, out_dir))
        written.append(write_radial_section(field, out_dir))
        written.append(write_tissue_power(field, context.cfg, out_dir))
    if context.saturation is not None:
        written.append(write_saturation(context.saturation, out_dir))
    if context.power is not None and context.power.ring_power_pW.size:
        written.append(write_ring_power(context.power, context.mesh, out_dir, context.baseline_power))
    if context.temperature is not None:
        written.append(write_temperature(context.mesh, context.temperature, context.power_density, out_dir))
    if context.krogh is not None:
        written.append(write_krogh(context.krogh, out_dir))
    logger.info("Wrote %d data files to %s", len(written), out_dir)
    return written


def write_matrix(results, path: Path) -> Path:
    """One row per design-matrix cell."""
    cells = [r.cell for r in results]
    return write_csv(path, [
        ('rings', '', np.array([c.rings for c in cells])),
        ('pumps', '', np.array([int(c.pumps) for c in cells])),
        ('high_capacity', '', np.array([int(c.capacity == 'high') for c in cells])),
        ('c_in', 'molecule/m^3', np.array([c.c_in for c in cells])),
        ('dP', 'Pa/m', np.array([c.pressure_gradient for c in cells])),
        ('demand', 'W/m^3', np.array([c.demand for c in cells])),
        ('power', 'pW', np.array([r.power_pW for r in results])),
        ('reference_power', 'pW', np.array([c.reference_pW for c in cells])),
        ('relative_error', '', np.array([r.relative_error for r in results])),
        ('converged', '', np.array([int(r.converged) for r in results])),
    ])


def write_power_table(results, path: Path) -> Path:
    """Per-robot power laid out like the reference table: a row per ringset design, a column per scenario."""
    power = {(r.cell.rings, r.cell.pumps, r.cell.capacity, r.cell.c_in, r.cell.pressure_gradient, r.cell.demand):
             r.power_pW for r in results}
    rows = list(dict.fromkeys((r.cell.rings, r.cell.pumps) for r in results))
    scenarios = list(dict.fromkeys((r.cell.capacity, r.cell.c_in, r.cell.pressure_gradient, r.cell.demand)
                                   for r in results))
    columns: List[Column] = [
        ('rings', '', np.array([rings for rings, _ in rows])),
        ('pumps', '', np.array([int(pumps) for _, pumps in rows])),
    ]
    for capacity, c_in, dP, demand in scenarios:
        values = [power.get((rings, pumps, capacity, c_in, dP, demand), np.nan) for rings, pumps in rows]
        columns.append((f"{capacity}/C_in={c_in:.0e}/dP={dP:.0e}/demand={demand:.0e}", 'pW', np.array(values)))
    return write_csv(path, columns)


def write_design_table(rows, path: Path) -> Path:
    return write_csv(path, [
        ('high_capacity', '', np.array([int(r.capacity == 'high') for r in rows])),
        ('c_in', 'molecule/m^3', np.array([r.concentration for r in rows])),
        ('gamma', '1/s', np.array([r.gamma for r in rows])),
        ('mu', 'm', np.array([r.mu for r in rows])),
        ('a_over_mu', '', np.array([r.ratio for r in rows])),
        ('f_mu', '', np.array([r.f_mu for r in rows])),
        ('pump_benefit', '', np.array([r.benefit for r in rows])),
        ('capped_pump_benefit', '', np.array([r.capped_benefit for r in rows])),
        ('thin_shell_benefit', '', np.array([r.thin_shell_benefit for r in rows])),
        ('pumps_power', 'pW', np.array([r.pumps_power_pW for r in rows])),
        ('no_pumps_power', 'pW', np.array([r.no_pumps_power_pW for r in rows])),
        ('cap_crossover', 'molecule/m^3', np.array([r.crossover for r in rows])),
    ])
