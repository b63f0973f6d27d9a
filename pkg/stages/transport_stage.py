"""Transport stage - coupled oxygen / saturation solve under the chosen pump strategy."""

import logging
from dataclasses import replace
from typing import Dict

from orchestrator.coupling_monitor import CouplingMonitor
from physics.flow import solve_flow, trace_core_boundary, with_core_speed
from physics.mesh import build_mesh
from physics.oxygen_transport import ConcentrationField, RobotDesign, solve_coupled
from physics.robot_power import duty_cycle_average, uniform_flux_search
from stages.base_stage import BaseStage
from utils.scenario import PumpMode, apply_overrides

logger = logging.getLogger(__name__)

NEGATIVE_TOLERANCE = 1.0e-6


class TransportStage(BaseStage):
    stage_name = "transport"
    stage_description = "Coupled plasma oxygen and hemoglobin saturation"
    dependencies = ['flow']

    def run(self) -> Dict[str, float]:
        ctx = self.context
        cfg = self.cfg
        design = ctx.design
        monitor = CouplingMonitor(cfg.solver.max_iterations, cfg.solver.tolerance)
        mode = design.pump_mode if design.pumps and not ctx.robot_free else PumpMode.FULL_ABSORB

        if mode is PumpMode.FULL_ABSORB:
            field, saturation, coupling = solve_coupled(ctx.mesh, ctx.flow, cfg, design, on_iteration=monitor)
        else:
            full = replace(design, pump_mode=PumpMode.FULL_ABSORB)
            ctx.baseline, _, _ = solve_coupled(ctx.mesh, ctx.flow, cfg, full, on_iteration=monitor)
            if mode is PumpMode.DUTY_CYCLE:
                ctx.strategy = duty_cycle_average(ctx.mesh, ctx.flow, cfg, design, on_iteration=monitor)
            elif design.uniform_flux is None:
                ctx.strategy = uniform_flux_search(ctx.mesh, ctx.flow, cfg, design,
                                                   reference=ctx.baseline, on_iteration=monitor)
            else:
                ctx.strategy = None
            if ctx.strategy is not None:
                field, saturation, coupling = ctx.strategy.field, ctx.strategy.saturation, ctx.strategy.coupling
                if ctx.strategy.field_phase is not None:
                    self.record.notes.append(f"field outputs show duty phase {ctx.strategy.field_phase}; "
                                             "power averages both phases")
            else:
                field, saturation, coupling = solve_coupled(ctx.mesh, ctx.flow, cfg, design,
                                                            on_iteration=monitor, initial=ctx.baseline)

        ctx.concentration, ctx.saturation, ctx.coupling = field, saturation, coupling
        ctx.coupling_summary = monitor.get_cycle_summary()
        self.record.converged = coupling.converged

        if ctx.with_reference and not ctx.robot_free:
            ctx.reference = self._solve_robot_free()

        residuals = dict(coupling.residuals)
        residuals['iterations'] = float(coupling.iteration)
        residuals['capacity_rounds'] = float(coupling.capacity_rounds)
        return residuals

    def _solve_robot_free(self) -> ConcentrationField:
        """Same scenario without robots, for upstream-influence comparison."""
        cfg = apply_overrides(self.cfg, {'robot.ring_count': 0, 'robot.ring_positions': (),
                                        'robot.pump_mode': PumpMode.FULL_ABSORB})
        mesh = build_mesh(cfg)
        flow = solve_flow(mesh, cfg)
        boundary = trace_core_boundary(flow, mesh, cfg)
        flow = with_core_speed(flow, boundary)
        field, _, state = solve_coupled(mesh.with_core_boundary(boundary), flow, cfg, RobotDesign.from_config(cfg))
        if not state.converged:
            logger.warning("Robot-free reference did not converge; upstream comparison is approximate")
        return field

    def self_audit(self) -> bool:
        ctx = self.context
        ok = True
        if not ctx.coupling.converged:
            self.flag(f"coupled solve stopped after {ctx.coupling.iteration} iterations "
                      f"(dC={ctx.coupling.change_C:.2e}, dS={ctx.coupling.change_S:.2e})")
            ok = False
        c_in = self.cfg.oxygen.inlet_concentration
        if ctx.concentration.minimum_before_clamp < -NEGATIVE_TOLERANCE * c_in:
            self.flag(f"concentration clamped from {ctx.concentration.minimum_before_clamp:.3e}")
            ok = False
        if ctx.coupling_summary.get('stalled'):
            self.flag("residuals stopped decreasing")
            ok = False
        return ok
