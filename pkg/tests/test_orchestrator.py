from __future__ import annotations

import asyncio
from typing import Dict

import pytest

from orchestrator.context_store import RunContext, RunManifest, StageStatus
from orchestrator.orchestrator import (
    REFERENCE_POWER,
    CellResult,
    MatrixCell,
    Orchestrator,
    design_matrix_cells,
    run_matrix,
)
from orchestrator.verification import matrix_orderings
from physics.oxygen_transport import RobotDesign
from stages import STAGE_CLASSES
from stages.base_stage import BaseStage
from utils.errors import ConfigError, StageError
from utils.scenario import apply_overrides, refined_mesh


class RecordingStage(BaseStage):
    stage_name = "first"
    dependencies = []
    calls = []

    def run(self) -> Dict[str, float]:
        self.calls.append(self.stage_name)
        return {'residual': 1e-9}


class SecondStage(RecordingStage):
    stage_name = "second"
    dependencies = ['first']


class ThirdStage(RecordingStage):
    stage_name = "third"
    dependencies = ['second']


class FlaggingStage(RecordingStage):
    stage_name = "flagging"
    dependencies = ['first']

    def self_audit(self) -> bool:
        self.flag("balance off")
        return False


class FailingStage(RecordingStage):
    stage_name = "failing"
    dependencies = ['first']

    def run(self) -> Dict[str, float]:
        raise ValueError("solver blew up")


class BadConfigStage(RecordingStage):
    stage_name = "bad_config"
    dependencies = []

    def run(self) -> Dict[str, float]:
        raise ConfigError('robot.uniform_flux', -1.0, "flux must be non-negative")


class CycleA(RecordingStage):
    stage_name = "a"
    dependencies = ['b']


class CycleB(RecordingStage):
    stage_name = "b"
    dependencies = ['a']


@pytest.fixture
def context(default_cfg):
    RecordingStage.calls = []
    return RunContext(cfg=default_cfg, design=RobotDesign())


def _orchestrator(context, *stages) -> Orchestrator:
    orchestrator = Orchestrator(context)
    for stage in stages:
        orchestrator.register_stage(stage)
    return orchestrator


def test_execution_order_follows_dependencies(context):
    orchestrator = _orchestrator(context, ThirdStage, SecondStage, RecordingStage)
    assert orchestrator.get_execution_order() == ['first', 'second', 'third']


def test_standard_stage_order(context):
    orchestrator = Orchestrator(context)
    orchestrator.register_all_stages()
    assert orchestrator.get_execution_order() == [s.stage_name for s in STAGE_CLASSES]


def test_cycle_is_reported(context):
    with pytest.raises(StageError):
        _orchestrator(context, CycleA, CycleB).get_execution_order()


def test_run_records_residuals_and_skips_completed_stages(context):
    orchestrator = _orchestrator(context, RecordingStage, SecondStage)
    orchestrator.run()
    assert RecordingStage.calls == ['first', 'second']
    assert context.get_record('second').residuals == {'residual': 1e-9}
    assert context.converged

    orchestrator.run()
    assert RecordingStage.calls == ['first', 'second']


def test_stage_waits_for_missing_dependencies(context):
    stage = SecondStage(context)
    assert not stage.can_run()
    record = stage.execute()
    assert record.status == StageStatus.PENDING
    assert record.errors == ["Dependencies not met: first"]
    assert RecordingStage.calls == []
    assert context.get_record('second') is record

    RecordingStage(context).execute()
    assert SecondStage(context).can_run()


def test_stop_after(context):
    _orchestrator(context, RecordingStage, SecondStage, ThirdStage).run(stop_after='second')
    assert RecordingStage.calls == ['first', 'second']
    assert context.get_record('third') is None


def test_flagged_stage_counts_as_done(context):
    orchestrator = _orchestrator(context, RecordingStage, FlaggingStage)
    orchestrator.run()
    record = context.get_record('flagging')
    assert record.status == StageStatus.FLAGGED
    assert record.notes == ["balance off"]
    assert orchestrator.get_status_summary()['flagged'] == ['flagging']


def test_failed_stage_raises_stage_error(context):
    with pytest.raises(StageError) as excinfo:
        _orchestrator(context, RecordingStage, FailingStage).run()
    assert "failing" in str(excinfo.value)
    assert "solver blew up" in str(excinfo.value)
    assert context.get_record('failing').status == StageStatus.FAILED


def test_config_errors_pass_through(context):
    with pytest.raises(ConfigError):
        _orchestrator(context, BadConfigStage).run()


def test_progress_callback_sees_each_stage(context):
    events = []
    orchestrator = Orchestrator(context, progress_callback=lambda phase, status, detail: events.append((phase, status)))
    orchestrator.register_stage(RecordingStage)
    orchestrator.run()
    assert events == [('first', 'started'), ('first', 'completed')]


def test_manifest_reports_missing_artifacts(tmp_path):
    manifest = RunManifest(scenario='low_demand', design='pumps-high', output_dir=str(tmp_path))
    written = tmp_path / 'flow.csv'
    written.write_text("r [m]\n1\n")
    manifest.add_artifact(written)
    manifest.add_artifact(written)
    manifest.add_artifact(tmp_path / 'summary.md')
    assert manifest.artifacts == [str(written), str(tmp_path / 'summary.md')]
    assert manifest.missing_artifacts() == [str(tmp_path / 'summary.md')]


def test_design_matrix_covers_every_reference_entry():
    cells = design_matrix_cells()
    assert len(cells) == 48
    assert len(set(cells)) == 48
    assert sum(cell.scenario_cell for cell in cells) == 8 * 2
    first = cells[0]
    assert (first.rings, first.pumps, first.capacity, first.c_in) == (10, True, 'high', 3.0e22)
    assert first.reference_pW == REFERENCE_POWER[(10, True)][0]


def test_matrix_cell_overrides_and_design():
    cell = MatrixCell(rings=1, pumps=False, capacity='low', c_in=7.0e22, pressure_gradient=5.0e5,
                      demand=6.0e4, reference_pW=7.0)
    assert cell.design == RobotDesign(pumps=False, capacity='low')
    assert cell.overrides()['robot.ring_count'] == 1
    assert cell.scenario_cell
    assert CellResult(cell, power_pW=7.7).relative_error == pytest.approx(0.1)


def test_refinement_follows_the_cell_face_spacing(coarse):
    cell = design_matrix_cells()[0]
    cell_cfg = apply_overrides(coarse(), cell.overrides())
    assert cell_cfg.mesh.face_spacing is None
    assert refined_mesh(cell_cfg).mesh.face_spacing == pytest.approx(5.0e-8)


def test_matrix_rejects_bad_overrides_before_running(default_cfg):
    with pytest.raises(ConfigError):
        asyncio.run(run_matrix(default_cfg, design_matrix_cells()[:1], overrides={'mesh.colour': 'red'}))


def test_reference_matrix_satisfies_its_own_orderings():
    results = [CellResult(cell, power_pW=cell.reference_pW, converged=True) for cell in design_matrix_cells()]
    assert matrix_orderings(results) == []


def test_orderings_catch_a_swapped_cell():
    cells = design_matrix_cells()
    results = [CellResult(cell, power_pW=cell.reference_pW, converged=True) for cell in cells]
    # pumps cell pushed below its no-pumps twin
    index = next(k for k, c in enumerate(cells) if c.rings == 1 and c.pumps and c.capacity == 'high')
    results[index] = CellResult(cells[index], power_pW=1.0, converged=True)
    assert any("pumps >= no pumps" in v for v in matrix_orderings(results))
