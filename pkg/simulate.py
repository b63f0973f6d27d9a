#!/usr/bin/env python3
"""
Capillary Power Simulator

Steady-state flow, oxygen transport and heating around rings of micron-scale robots
on a capillary wall, reporting the chemical power each robot can generate.

Usage:
    python simulate.py run --preset low_demand --design pumps-high --rings 10
    python simulate.py run --preset low_demand --rings 0 --out ./output/control
    python simulate.py run --matrix table4 --workers 4
    python simulate.py verify --level analytic
    python simulate.py analytic
    python simulate.py mesh --preset high_demand --rings 1
"""

import argparse
import asyncio
import json
import os
import sys
import logging
from dataclasses import replace
from pathlib import Path

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

load_dotenv()

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent))

from orchestrator.context_store import RunManifest
from orchestrator.orchestrator import run_pipeline, run_matrix, design_matrix_cells
from orchestrator.verification import LEVELS, verify
from physics.analytic import analytic_design_table
from physics.mesh import build_mesh
from physics.oxygen_transport import RobotDesign
from utils.errors import ConfigError, SimulationError
from utils.output import write_design_table, write_matrix, write_mesh, write_power_table, write_run_outputs
from utils.report import generate_summary, json_ready
from utils.scenario import PRESETS, PumpMode, ScenarioConfig, load_scenario

PUMP_MODES = {
    'full': PumpMode.FULL_ABSORB,
    'uniform': PumpMode.UNIFORM_FLUX,
    'duty': PumpMode.DUTY_CYCLE,
}

# --matrix choice: (file name, writer)
MATRIX_OUTPUTS = {
    'table4': ('table4.csv', write_power_table),
    'design': ('design_matrix.csv', write_matrix),
}

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def banner(title: str):
    print("\n" + "=" * 60)
    print(f"  {title}")
    print("=" * 60 + "\n")


def section(title: str):
    print("\n" + "-" * 50)
    print(f"  {title}")
    print("-" * 50)


def parse_set_options(items) -> dict:
    """`--set key=value` pairs as scenario overrides."""
    overrides = {}
    for item in items or []:
        if '=' not in item:
            raise ConfigError(item, None, "--set expects key=value")
        key, value = item.split('=', 1)
        overrides[key.strip()] = value.strip()
    return overrides


def build_scenario(args) -> ScenarioConfig:
    overrides = parse_set_options(getattr(args, 'set', None))
    rings = getattr(args, 'rings', None)
    if rings is not None:
        overrides['robot.ring_count'] = str(rings)
        overrides.setdefault('robot.ring_positions', '')

    if args.config:
        config_path = Path(args.config)
        if not config_path.exists():
            raise ConfigError('--config', str(config_path), "file not found")
        if args.preset:
            overrides = {'preset': args.preset, **overrides}
        print(f"Loading scenario from: {config_path}")
        return load_scenario(config_path, overrides)

    preset = args.preset or 'low_demand'
    print(f"Using preset: {preset}")
    return load_scenario(f"preset = {preset}", overrides)


def build_design(args, cfg: ScenarioConfig) -> RobotDesign:
    design = RobotDesign.parse(args.design) if args.design else RobotDesign.from_config(cfg)
    if args.pump_mode:
        design = replace(design, pump_mode=PUMP_MODES[args.pump_mode])
    if args.shell is not None:
        design = replace(design, shell_fraction=args.shell)
    return design


def output_root(args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get('CAPILLARY_OUTPUT_DIR', './output'))


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get('CAPILLARY_WORKERS', '1')))
    except ValueError:
        raise ConfigError('CAPILLARY_WORKERS', os.environ.get('CAPILLARY_WORKERS'), "expected an integer")


def print_progress(phase: str, status: str, detail: str = ""):
    suffix = f" ({detail})" if detail else ""
    print(f"  [{phase}] {status}{suffix}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def run_scenario(args, cfg: ScenarioConfig, out_dir: Path) -> RunManifest:
    """Run one scenario through the pipeline and write every output."""
    design = build_design(args, cfg)
    print(f"\nScenario: {cfg.name}")
    print(f"Design: {design.label} ({design.pump_mode.value if design.pumps else 'no pumps'})")
    print(f"Rings: {cfg.robot.ring_count}")
    print(f"Output: {out_dir}")

    section("Running Pipeline")
    context = run_pipeline(cfg, design, output_dir=out_dir, verbose=args.verbose,
                           progress_callback=print_progress, dump_mesh=args.dump_mesh,
                           with_reference=args.with_reference)

    section("Writing Outputs")
    manifest = RunManifest(scenario=context.cfg.name, design=design.label, output_dir=str(out_dir),
                           convergence={name: r.to_dict() for name, r in context.records.items()},
                           converged=context.converged)
    for path in write_run_outputs(context, out_dir):
        manifest.add_artifact(path)
    manifest.add_artifact(out_dir / 'summary.md')
    manifest.add_artifact(out_dir / 'summary.json')
    generate_summary(context, manifest, out_dir)

    manifest.headline = context.get_summary()
    return manifest


def cmd_run(args) -> int:
    cfg = build_scenario(args)
    out_dir = output_root(args)

    if args.matrix:
        return run_design_matrix(cfg, out_dir, args.workers or default_workers(), args.matrix)

    manifest = run_scenario(args, cfg, out_dir)
    missing = manifest.missing_artifacts()
    if missing:
        logger.error("Missing or empty outputs: %s", ", ".join(missing))

    summary = manifest.headline
    banner("RUN COMPLETE" if manifest.converged else "RUN FINISHED WITHOUT CONVERGENCE")
    if 'v_avg_mm_s' in summary:
        print(f"Mean flow speed: {summary['v_avg_mm_s']:.4g} mm/s (reduction to {summary['flow_reduction']:.1%})")
    if 'mean_robot_pW' in summary:
        print(f"Power per robot: mean {summary['mean_robot_pW']:.3g} pW, min {summary['min_robot_pW']:.3g} pW")
        print(f"Aggregate: {summary['aggregate_pW']:.4g} pW ({summary['aggregate_uptake']:.3g} molecule/s)")
    if 'outlet_saturation' in summary:
        print(f"Outlet saturation: {summary['outlet_saturation']:.3f}")
    if 'max_temperature_rise_K' in summary:
        print(f"Max temperature rise: {summary['max_temperature_rise_K']:.3g} K")
    print(f"\nSummary saved to: {Path(manifest.output_dir) / 'summary.md'}")

    if args.verbose:
        print("\n--- Stage Details ---")
        for name, record in manifest.convergence.items():
            print(f"  - {name}: {record['status']} ({record['elapsed_s']:.2f}s)")
            for note in record['notes']:
                print(f"      {note}")

    return EXIT_OK if manifest.converged and not missing else EXIT_FAILED


def run_design_matrix(cfg: ScenarioConfig, out_dir: Path, workers: int, layout: str = 'table4') -> int:
    cells = design_matrix_cells()
    print(f"\nDesign matrix: {len(cells)} cells, {workers} worker(s)")
    section("Running Matrix")
    results = asyncio.run(run_matrix(cfg, cells, workers=workers, progress_callback=print_progress))
    filename, writer = MATRIX_OUTPUTS[layout]
    path = writer(results, out_dir / filename)

    banner("MATRIX COMPLETE")
    print(f"{'cell':<72} {'power':>8} {'ref':>6} {'err':>7}")
    for result in results:
        flag = "" if result.converged and not result.error else "  (flagged)"
        print(f"{result.cell.label:<72} {result.power_pW:8.2f} {result.cell.reference_pW:6.0f} "
              f"{result.relative_error:+7.1%}{flag}")
    print(f"\nMatrix saved to: {path}")
    ok = all(r.converged and not r.error for r in results)
    return EXIT_OK if ok else EXIT_FAILED


def cmd_verify(args) -> int:
    cfg = build_scenario(args)
    print(f"\nVerification level: {args.level}")
    report = verify(cfg, level=args.level, workers=args.workers or default_workers(),
                    refinement=args.refinement)

    banner("VERIFICATION " + ("PASSED" if report.passed else "FAILED"))
    for check in report.checks:
        mark = "ok  " if check.passed else "FAIL"
        value = f"{check.value:.4g}" if isinstance(check.value, float) else ""
        expected = f" (expected {check.expected:.4g} {check.tolerance})" if check.expected is not None else ""
        print(f"  {mark} {check.name}: {value}{expected}")
        if check.detail and not check.passed:
            print(f"         {check.detail}")

    out_dir = output_root(args)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"verification_{args.level}.json"
    path.write_text(json.dumps(json_ready(report.to_dict()), indent=2), encoding='utf-8')
    print(f"\n{len(report.checks) - len(report.failures)}/{len(report.checks)} checks passed")
    print(f"Report saved to: {path}")
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_analytic(args) -> int:
    cfg = build_scenario(args)
    rows = analytic_design_table(cfg)

    banner("ANALYTIC DESIGN TABLE")
    print(f"{'capacity':<9} {'C_in':>8} {'a/mu':>7} {'f_mu':>7} {'G':>7} {'G cap':>7} "
          f"{'shell':>7} {'pumps pW':>9} {'free pW':>8}")
    for row in rows:
        print(f"{row.capacity:<9} {row.concentration:8.1e} {row.ratio:7.3f} {row.f_mu:7.4f} "
              f"{row.benefit:7.2f} {row.capped_benefit:7.2f} {row.thin_shell_benefit:7.4f} "
              f"{row.pumps_power_pW:9.1f} {row.no_pumps_power_pW:8.1f}")

    path = write_design_table(rows, output_root(args) / 'analytic_design.csv')
    print(f"\nTable saved to: {path}")
    return EXIT_OK


def cmd_mesh(args) -> int:
    cfg = build_scenario(args)
    mesh = build_mesh(cfg)
    path = write_mesh(mesh, output_root(args))

    banner("MESH")
    print(f"Cells: {mesh.nr} x {mesh.nz} = {mesh.cell_count}")
    print(f"Lumen rows: {mesh.n_lumen}, rings: {mesh.ring_count}")
    if mesh.ring_count:
        print(f"Robot face spacing: {mesh.robot_face_spacing() * 1e9:.1f} nm")
    print(f"\nMesh saved to: {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--preset', '-p', choices=sorted(PRESETS), help='Named scenario (default: low_demand)')
    common.add_argument('--config', '-c', help='Path to a scenario file (key = value)')
    common.add_argument('--set', '-s', action='append', metavar='KEY=VALUE', help='Override one scenario key')
    common.add_argument('--out', '-o', help='Output directory (default: $CAPILLARY_OUTPUT_DIR or ./output)')
    common.add_argument('--verbose', '-v', action='store_true', help='Verbose output')

    parser = argparse.ArgumentParser(
        description='Capillary Power Simulator - chemical power of robots on a capillary wall'
    )
    commands = parser.add_subparsers(dest='command', required=True)

    run = commands.add_parser('run', parents=[common], help='Run one scenario, or the design matrix')
    run.add_argument('--design', '-d', help='Robot design: {pumps|nopumps}-{high|low}')
    run.add_argument('--rings', '-r', type=int, help='Number of robot rings (0: robot-free control)')
    run.add_argument('--pump-mode', choices=sorted(PUMP_MODES), help='Pump strategy for robots with pumps')
    run.add_argument('--shell', type=float, help='Fraction of the robot holding the reaction sites')
    run.add_argument('--matrix', choices=sorted(MATRIX_OUTPUTS),
                     help='Run the design matrix: table4 (reference layout) or design (one row per cell)')
    run.add_argument('--workers', '-w', type=int, help='Parallel matrix workers (default: $CAPILLARY_WORKERS or 1)')
    run.add_argument('--dump-mesh', action='store_true', help='Also write mesh.csv')
    run.add_argument('--with-reference', action='store_true',
                     help='Also solve the robot-free case for the upstream comparison')
    run.set_defaults(handler=cmd_run)

    check = commands.add_parser('verify', parents=[common], help='Run the acceptance checks')
    check.add_argument('--level', '-l', choices=LEVELS, default='analytic', help='How much to run (default: analytic)')
    check.add_argument('--workers', '-w', type=int, help='Parallel matrix workers')
    check.add_argument('--refinement', action='store_true', help='Also rerun scenario cells on a halved mesh')
    check.set_defaults(handler=cmd_verify)

    analytic = commands.add_parser('analytic', parents=[common], help='Isolated-sphere design table')
    analytic.set_defaults(handler=cmd_analytic)

    mesh = commands.add_parser('mesh', parents=[common], help='Build and dump the mesh only')
    mesh.add_argument('--rings', '-r', type=int, help='Number of robot rings')
    mesh.set_defaults(handler=cmd_mesh)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    # Configure logging
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    banner("CAPILLARY POWER SIMULATOR")

    try:
        return args.handler(args)
    except ConfigError as e:
        print(f"Error: {e}")
        return EXIT_USAGE
    except SimulationError as e:
        print(f"\nSimulation failed: {e}")
        if args.verbose:
            import traceback
            traceback.print_exc()
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
