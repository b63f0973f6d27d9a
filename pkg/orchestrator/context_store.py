"""Shared run state passed between pipeline stages."""

from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

from physics.analytic import KroghComparison
from physics.flow import FlowField, HematocritProfile, WallForce
from physics.mesh import AxiMesh, CoreBoundary
from physics.oxygen_transport import BalanceReport, ConcentrationField, CouplingState, RobotDesign
from physics.rbc_kinetics import SaturationState
from physics.robot_power import BurstEstimate, PowerReport, RingProfile, StrategyResult
from physics.thermal import TemperatureField
from utils.scenario import ScenarioConfig


class StageStatus(Enum):
    """Status of a stage's execution."""
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FLAGGED = "flagged"  # finished, but a self-audit check failed
    FAILED = "failed"


@dataclass
class StageRecord:
    """Bookkeeping for one stage of one run."""
    stage_name: str
    status: StageStatus = StageStatus.PENDING
    converged: bool = True
    residuals: Dict[str, float] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)
    errors: List[str] = field(default_factory=list)
    exception: Optional[BaseException] = None
    started_at: str = ""
    completed_at: str = ""
    elapsed: float = 0.0

    @property
    def done(self) -> bool:
        return self.status in (StageStatus.COMPLETED, StageStatus.FLAGGED)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'stage': self.stage_name,
            'status': self.status.value,
            'converged': self.converged,
            'residuals': dict(self.residuals),
            'notes': list(self.notes),
            'errors': list(self.errors),
            'started_at': self.started_at,
            'completed_at': self.completed_at,
            'elapsed_s': round(self.elapsed, 3),
        }


@dataclass
class RunManifest:
    """What a run produced and whether every stage converged."""
    scenario: str
    design: str
    output_dir: str
    artifacts: List[str] = field(default_factory=list)
    convergence: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    converged: bool = False
    headline: Dict[str, Any] = field(default_factory=dict)  # RunContext.get_summary(), not serialized

    def add_artifact(self, path: Path):
        name = str(path)
        if name not in self.artifacts:
            self.artifacts.append(name)

    def missing_artifacts(self) -> List[str]:
        """Listed artifacts that do not exist or are empty."""
        return [a for a in self.artifacts if not Path(a).is_file() or Path(a).stat().st_size == 0]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'scenario': self.scenario,
            'design': self.design,
            'output_dir': self.output_dir,
            'artifacts': list(self.artifacts),
            'convergence': self.convergence,
            'converged': self.converged,
        }


@dataclass
class RunContext:
    """
    State container for one scenario run.

    Stages read the products of their dependencies from here and write their own.
    """
    # Configuration
    cfg: ScenarioConfig
    design: RobotDesign
    output_dir: Optional[Path] = None
    dump_mesh: bool = False
    with_reference: bool = False  # also solve the robot-free case for upstream comparison
    allow_unconverged: bool = False
    run_date: str = field(default_factory=lambda: datetime.now().strftime('%Y-%m-%d'))

    # mesh / flow
    mesh: Optional[AxiMesh] = None
    flow: Optional[FlowField] = None
    boundary: Optional[CoreBoundary] = None
    hematocrit: Optional[HematocritProfile] = None
    force: Optional[WallForce] = None
    flow_reduction: float = 1.0

    # transport
    concentration: Optional[ConcentrationField] = None
    saturation: Optional[SaturationState] = None
    coupling: Optional[CouplingState] = None
    strategy: Optional[StrategyResult] = None
    baseline: Optional[ConcentrationField] = None  # full-absorb solve behind a pump strategy
    reference: Optional[ConcentrationField] = None  # robot-free solve
    coupling_summary: Dict[str, Any] = field(default_factory=dict)

    # power / thermal
    power: Optional[PowerReport] = None
    baseline_power: Optional[PowerReport] = None
    ring_profile: Optional[RingProfile] = None
    burst: Optional[BurstEstimate] = None
    power_density: Optional[Any] = None  # W/m^3 on the mesh
    temperature: Optional[TemperatureField] = None

    # audit
    balance: Optional[BalanceReport] = None
    krogh: Optional[KroghComparison] = None
    upstream: Dict[float, float] = field(default_factory=dict)

    records: Dict[str, StageRecord] = field(default_factory=dict)
    created_at: str = field(default_factory=lambda: datetime.now().isoformat())

    def get_record(self, stage_name: str) -> Optional[StageRecord]:
        return self.records.get(stage_name)

    def set_record(self, record: StageRecord):
        self.records[record.stage_name] = record

    @property
    def robot_free(self) -> bool:
        return self.cfg.robot.ring_count == 0

    @property
    def converged(self) -> bool:
        """Every recorded stage finished and converged."""
        return bool(self.records) and all(r.done and r.converged for r in self.records.values())

    def share_hydrodynamics(self, other: 'RunContext'):
        """Reuse another run's mesh and flow products (same geometry and gradient)."""
        self.mesh = other.mesh
        self.flow = other.flow
        self.boundary = other.boundary
        self.hematocrit = other.hematocrit
        self.force = other.force
        self.flow_reduction = other.flow_reduction
        for name in ('mesh', 'flow'):
            record = other.get_record(name)
            if record is not None and record.done:
                self.set_record(record)

    def get_summary(self) -> Dict[str, Any]:
        """Headline numbers of the run."""
        summary: Dict[str, Any] = {
            'scenario': self.cfg.name,
            'design': self.design.label,
            'rings': self.cfg.robot.ring_count,
            'pump_mode': self.design.pump_mode.value if self.design.pumps else None,
            'flow_reduction': self.flow_reduction,
            'stages_completed': sum(1 for r in self.records.values() if r.status == StageStatus.COMPLETED),
            'stages_flagged': sum(1 for r in self.records.values() if r.status == StageStatus.FLAGGED),
            'converged': self.converged,
        }
        if self.flow is not None:
            summary['v_avg_mm_s'] = self.flow.v_avg * 1e3
        if self.force is not None:
            summary['wall_force_N'] = self.force.total
            summary['wall_force_per_robot_N'] = self.force.per_robot
            summary['wall_force_coefficient_m3'] = self.force.coefficient
        if self.hematocrit is not None:
            summary['core_hematocrit_mean'] = self.hematocrit.mean
        if self.power is not None:
            summary['mean_robot_pW'] = self.power.mean_robot_pW
            summary['min_robot_pW'] = self.power.min_robot_pW
            summary['aggregate_pW'] = self.power.aggregate_pW
            summary['aggregate_uptake'] = self.power.aggregate_uptake
            summary['parasitic_pW'] = self.power.parasitic_pW
        if self.saturation is not None:
            summary['outlet_saturation'] = self.saturation.outlet
            summary['min_saturation'] = self.saturation.minimum
            summary['max_disequilibrium'] = float(abs(self.saturation.disequilibrium).max())
        if self.temperature is not None:
            summary['max_temperature_rise_K'] = self.temperature.max_rise
        if self.balance is not None:
            summary['species_balance_relative'] = self.balance.relative_residual
        if self.strategy is not None and self.strategy.uniform_flux is not None:
            summary['uniform_flux'] = self.strategy.uniform_flux
        if self.baseline_power is not None and self.power is not None and self.baseline_power.aggregate_pW > 0:
            summary['strategy_aggregate_fraction'] = self.power.aggregate_pW / self.baseline_power.aggregate_pW
            summary['baseline_min_robot_pW'] = self.baseline_power.min_robot_pW
        return summary
