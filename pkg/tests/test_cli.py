from __future__ import annotations

import json

import pytest

import simulate
from orchestrator.orchestrator import CellResult
from physics.oxygen_transport import RobotDesign
from utils.errors import ConfigError
from utils.scenario import PumpMode


def test_run_arguments():
    args = simulate.build_parser().parse_args(
        ['run', '-p', 'high_demand', '-d', 'pumps-low', '-r', '1', '--pump-mode', 'duty', '--shell', '0.2'])
    cfg = simulate.build_scenario(args)
    assert cfg.name == 'high_demand'
    assert cfg.robot.ring_count == 1
    design = simulate.build_design(args, cfg)
    assert design == RobotDesign(pumps=True, capacity='low', pump_mode=PumpMode.DUTY_CYCLE, shell_fraction=0.2)


def test_set_options_need_an_equals_sign():
    assert simulate.parse_set_options(['robot.ring_count = 3']) == {'robot.ring_count': '3'}
    with pytest.raises(ConfigError):
        simulate.parse_set_options(['robot.ring_count'])


def test_workers_from_environment(monkeypatch):
    monkeypatch.setenv('CAPILLARY_WORKERS', '3')
    assert simulate.default_workers() == 3
    monkeypatch.setenv('CAPILLARY_WORKERS', 'many')
    with pytest.raises(ConfigError):
        simulate.default_workers()


def test_output_directory_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv('CAPILLARY_OUTPUT_DIR', str(tmp_path))
    args = simulate.build_parser().parse_args(['analytic'])
    assert simulate.output_root(args) == tmp_path


def test_analytic_command_writes_the_design_table(tmp_path):
    assert simulate.main(['analytic', '--out', str(tmp_path)]) == simulate.EXIT_OK
    lines = (tmp_path / 'analytic_design.csv').read_text().splitlines()
    assert lines[0].startswith('high_capacity,c_in [molecule/m^3]')
    assert len(lines) == 5


def test_mesh_command(tmp_path, coarse_mesh_options):
    argv = ['mesh', '--rings', '0', '--out', str(tmp_path)] + coarse_mesh_options
    assert simulate.main(argv) == simulate.EXIT_OK
    assert (tmp_path / 'mesh.csv').stat().st_size > 0


@pytest.mark.parametrize("argv", [
    ['analytic', '--set', 'robot.colour=red'],
    ['analytic', '--set', 'hematocrit=lots'],
    ['analytic', '--config', 'no/such/scenario.txt'],
])
def test_configuration_errors_exit_with_usage_code(tmp_path, argv):
    assert simulate.main(argv + ['--out', str(tmp_path)]) == simulate.EXIT_USAGE


def test_verify_command_writes_a_report(tmp_path):
    assert simulate.main(['verify', '--level', 'analytic', '--out', str(tmp_path)]) == simulate.EXIT_OK
    report = json.loads((tmp_path / 'verification_analytic.json').read_text())
    assert report['level'] == 'analytic'
    assert report['passed']


def test_scenario_file(tmp_path):
    path = tmp_path / 'scenario.txt'
    path.write_text("preset = high_demand\nrobot.ring_count = 1\n")
    args = simulate.build_parser().parse_args(['analytic', '--config', str(path)])
    cfg = simulate.build_scenario(args)
    assert cfg.pressure_gradient == 5.0e5
    assert cfg.robot.ring_count == 1


def test_robot_free_run_writes_its_manifest(tmp_path, coarse_mesh_options):
    argv = ['run', '-d', 'nopumps-high', '-r', '0', '--out', str(tmp_path)] + coarse_mesh_options
    args = simulate.build_parser().parse_args(argv)
    manifest = simulate.run_scenario(args, simulate.build_scenario(args), tmp_path)
    assert manifest.converged
    assert manifest.missing_artifacts() == []
    assert str(tmp_path / 'krogh.csv') in manifest.artifacts
    assert manifest.headline['rings'] == 0
    summary = json.loads((tmp_path / 'summary.json').read_text())
    assert 'headline' not in summary['manifest']


@pytest.fixture
def reference_matrix(monkeypatch):
    async def fake_run_matrix(cfg, cells, workers=1, progress_callback=None):
        return [CellResult(cell, power_pW=cell.reference_pW, converged=True) for cell in cells]
    monkeypatch.setattr(simulate, 'run_matrix', fake_run_matrix)


def test_matrix_table4_writes_the_reference_layout(tmp_path, reference_matrix):
    assert simulate.main(['run', '--matrix', 'table4', '--out', str(tmp_path)]) == simulate.EXIT_OK
    lines = (tmp_path / 'table4.csv').read_text().splitlines()
    header = lines[0].split(',')
    assert len(lines) == 5
    assert header[:3] == ['rings', 'pumps', 'high/C_in=3e+22/dP=1e+05/demand=4e+03 [pW]']
    assert len(header) == 14
    assert lines[1] == '10,1,12,8,14,12,17,11,24,18,17,11,24,18'
    assert lines[4] == '1,0,31,19,34,25,49,25,71,38,9,4,12,7'


def test_matrix_design_writes_one_row_per_cell(tmp_path, reference_matrix):
    assert simulate.main(['run', '--matrix', 'design', '--out', str(tmp_path)]) == simulate.EXIT_OK
    assert len((tmp_path / 'design_matrix.csv').read_text().splitlines()) == 49
