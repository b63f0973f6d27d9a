"""Main orchestrator for running the simulation pipeline and the design matrix."""

import sys
import asyncio
import logging
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Type

logger = logging.getLogger(__name__)

sys.path.insert(0, str(Path(__file__).parent.parent))

from .context_store import RunContext, StageRecord, StageStatus
from physics.oxygen_transport import RobotDesign
from utils.errors import ConfigError, StageError
from utils.scenario import ScenarioConfig, apply_overrides, refined_mesh


class Orchestrator:
    """
    Coordinates the pipeline stages of one run.

    Manages:
    - Stage execution order based on dependencies
    - Skipping stages whose products are already in the context
    - Turning stage failures into StageError with the last residuals
    """

    def __init__(self, context: RunContext, verbose: bool = False, progress_callback=None):
        """
        Args:
            context: Run context holding the scenario and design
            verbose: Enable verbose output
            progress_callback: Optional callback(phase, status, detail) for progress updates
        """
        self.context = context
        self.verbose = verbose
        self.progress_callback = progress_callback
        self._stages: Dict[str, 'BaseStage'] = OrderedDict()

    def register_stage(self, stage_class: Type['BaseStage']):
        stage = stage_class(self.context, verbose=self.verbose)
        self._stages[stage.stage_name] = stage

    def register_all_stages(self):
        """Register all standard stages."""
        from stages import STAGE_CLASSES

        for stage_class in STAGE_CLASSES:
            self.register_stage(stage_class)

    def get_execution_order(self) -> List[str]:
        """
        Determine execution order based on dependencies.

        Returns topologically sorted list of stage names.
        """
        in_degree = {name: 0 for name in self._stages}
        graph = {name: [] for name in self._stages}

        for name, stage in self._stages.items():
            for dep in stage.dependencies:
                if dep in graph:
                    graph[dep].append(name)
                    in_degree[name] += 1

        queue = [name for name, degree in in_degree.items() if degree == 0]
        order = []
        while queue:
            current = queue.pop(0)
            order.append(current)
            for neighbor in graph[current]:
                in_degree[neighbor] -= 1
                if in_degree[neighbor] == 0:
                    queue.append(neighbor)

        if len(order) != len(self._stages):
            cyclic = sorted(set(self._stages) - set(order))
            raise StageError(cyclic[0], f"dependency cycle among {', '.join(cyclic)}")
        return order

    def run_stage(self, name: str) -> StageRecord:
        stage = self._stages[name]
        record = self.context.get_record(name)
        if record is not None and record.done:
            logger.debug("Skipping %s - already completed", name)
            return record

        if self.progress_callback:
            self.progress_callback(phase=name, status="started", detail=stage.stage_description)
        record = stage.execute()
        if self.progress_callback:
            self.progress_callback(phase=name, status=record.status.value, detail=", ".join(record.notes))

        if record.status == StageStatus.FAILED:
            if isinstance(record.exception, ConfigError):
                raise record.exception
            last = self._last_residuals()
            raise StageError(name, record.errors[-1] if record.errors else "failed", last) from record.exception
        if record.status == StageStatus.PENDING:
            raise StageError(name, "; ".join(record.errors) or "dependencies not met")
        return record

    def _last_residuals(self) -> Dict[str, float]:
        residuals: Dict[str, float] = {}
        for record in self.context.records.values():
            residuals.update({f"{record.stage_name}.{k}": v for k, v in record.residuals.items()})
        if self.context.coupling is not None:
            residuals.update({f"coupling.{k}": v for k, v in self.context.coupling.residuals.items()})
        return residuals

    def run(self, stop_after: Optional[str] = None) -> RunContext:
        """Run every registered stage in dependency order (optionally stopping early)."""
        if not self._stages:
            self.register_all_stages()
        logger.info("Run: %s / %s, %d ring(s)", self.context.cfg.name, self.context.design.label,
                    self.context.cfg.robot.ring_count)
        for name in self.get_execution_order():
            self.run_stage(name)
            if name == stop_after:
                break
        return self.context

    def get_status_summary(self) -> Dict:
        completed, flagged, failed, pending = [], [], [], []
        for name in self._stages:
            record = self.context.get_record(name)
            status = record.status if record is not None else StageStatus.PENDING
            {
                StageStatus.COMPLETED: completed,
                StageStatus.FLAGGED: flagged,
                StageStatus.FAILED: failed,
            }.get(status, pending).append(name)
        return {
            'completed': completed,
            'flagged': flagged,
            'failed': failed,
            'pending': pending,
            'total_stages': len(self._stages),
            'coupling': self.context.coupling_summary,
        }


def run_pipeline(cfg: ScenarioConfig, design: RobotDesign, output_dir: Optional[Path] = None,
                 verbose: bool = False, progress_callback=None, **options) -> RunContext:
    """Build a context for one scenario / design and run the whole pipeline."""
    context = RunContext(cfg=design.apply(cfg), design=design, output_dir=output_dir, **options)
    return Orchestrator(context, verbose=verbose, progress_callback=progress_callback).run()


# ---------------------------------------------------------------------------
# Design matrix
# ---------------------------------------------------------------------------

# Average per-robot power (pW). Rows: (rings, pumps); columns in the order of REFERENCE_COLUMNS.
REFERENCE_COLUMNS: Tuple[Tuple[str, float, float, float], ...] = tuple(
    (capacity, c_in, dP, demand)
    for capacity, c_in in (('high', 3.0e22), ('high', 7.0e22), ('low', 7.0e22))
    for dP in (1.0e5, 5.0e5)
    for demand in (4.0e3, 6.0e4)
)

REFERENCE_POWER: Dict[Tuple[int, bool], Tuple[float, ...]] = {
    (10, True): (12, 8, 14, 12, 17, 11, 24, 18, 17, 11, 24, 18),
    (10, False): (11, 7, 12, 10, 15, 10, 22, 16, 6, 3, 8, 6),
    (1, True): (44, 27, 49, 36, 69, 36, 99, 58, 69, 36, 99, 58),
    (1, False): (31, 19, 34, 25, 49, 25, 71, 38, 9, 4, 12, 7),
}

# (pressure gradient, tissue demand) pairs of the two named scenarios
SCENARIO_COLUMNS = ((1.0e5, 4.0e3), (5.0e5, 6.0e4))


@dataclass(frozen=True)
class MatrixCell:
    rings: int
    pumps: bool
    capacity: str
    c_in: float
    pressure_gradient: float
    demand: float
    reference_pW: float

    @property
    def design(self) -> RobotDesign:
        return RobotDesign(pumps=self.pumps, capacity=self.capacity)

    @property
    def label(self) -> str:
        return (f"{self.rings}-ring {self.design.label} C_in={self.c_in:.0e} "
                f"dP={self.pressure_gradient:.0e} demand={self.demand:.0e}")

    @property
    def scenario_cell(self) -> bool:
        """Cell belongs to one of the named low / high demand scenarios."""
        return self.c_in == 7.0e22 and (self.pressure_gradient, self.demand) in SCENARIO_COLUMNS

    @property
    def hydrodynamic_key(self) -> Tuple:
        return (self.rings, self.pressure_gradient, self.demand, self.c_in)

    def overrides(self) -> Dict[str, object]:
        return {
            'robot.ring_count': self.rings,
            'robot.ring_positions': (),
            'pressure_gradient': self.pressure_gradient,
            'tissue.max_power_density': self.demand,
            'oxygen.inlet_concentration': self.c_in,
            'mesh.face_spacing': None,
        }


@dataclass
class CellResult:
    cell: MatrixCell
    power_pW: float = float('nan')
    converged: bool = False
    error: str = ""

    @property
    def relative_error(self) -> float:
        return (self.power_pW - self.cell.reference_pW) / self.cell.reference_pW


def design_matrix_cells() -> List[MatrixCell]:
    cells = []
    for (rings, pumps), values in REFERENCE_POWER.items():
        for (capacity, c_in, dP, demand), value in zip(REFERENCE_COLUMNS, values):
            cells.append(MatrixCell(rings=rings, pumps=pumps, capacity=capacity, c_in=c_in,
                                    pressure_gradient=dP, demand=demand, reference_pW=float(value)))
    return cells


def run_cell_group(cfg: ScenarioConfig, cells: Sequence[MatrixCell],
                   overrides: Optional[Dict[str, object]] = None, refine: bool = False) -> List[CellResult]:
    """Run cells that share geometry and flow; mesh and flow are solved once. `refine` halves every spacing."""
    results = []
    shared: Optional[RunContext] = None
    for cell in cells:
        result = CellResult(cell=cell)
        try:
            cell_cfg = apply_overrides(cfg, {**cell.overrides(), **(overrides or {})})
            if refine:
                cell_cfg = refined_mesh(cell_cfg)
            context = RunContext(cfg=cell.design.apply(cell_cfg), design=cell.design, allow_unconverged=True)
            if shared is not None:
                context.share_hydrodynamics(shared)
            Orchestrator(context).run()
            shared = shared or context
            result.power_pW = context.power.mean_robot_pW
            result.converged = context.converged
        except Exception as e:
            result.error = str(e)
            logger.error("Matrix cell %s failed: %s", cell.label, e)
        results.append(result)
    return results


def _group_cells(cells: Sequence[MatrixCell]) -> List[List[MatrixCell]]:
    groups: Dict[Tuple, List[MatrixCell]] = OrderedDict()
    for cell in cells:
        groups.setdefault(cell.hydrodynamic_key, []).append(cell)
    return list(groups.values())


async def run_matrix(cfg: ScenarioConfig, cells: Optional[Sequence[MatrixCell]] = None, workers: int = 1,
                     overrides: Optional[Dict[str, object]] = None, progress_callback=None,
                     refine: bool = False) -> List[CellResult]:
    """
    Run matrix cells, grouped by shared hydrodynamics, up to `workers` groups at a time.

    Results come back in the order of `cells`.
    """
    cells = list(cells if cells is not None else design_matrix_cells())
    for cell in cells:
        apply_overrides(cfg, {**cell.overrides(), **(overrides or {})})  # surface ConfigError here
    groups = _group_cells(cells)
    logger.info("Matrix: %d cells in %d groups, %d worker(s)", len(cells), len(groups), workers)

    by_cell: Dict[MatrixCell, CellResult] = {}

    def collect(results: List[CellResult]):
        for result in results:
            by_cell[result.cell] = result
        if progress_callback:
            progress_callback(phase="matrix", status="progress", detail=f"{len(by_cell)}/{len(cells)} cells")

    if workers <= 1:
        for group in groups:
            collect(run_cell_group(cfg, group, overrides, refine))
    else:
        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            tasks = [loop.run_in_executor(pool, run_cell_group, cfg, group, overrides, refine) for group in groups]
            for finished in asyncio.as_completed(tasks):
                collect(await finished)

    return [by_cell[cell] for cell in cells]
