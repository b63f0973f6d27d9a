"""Flow stage - Stokes flow, wall force and the red-cell core."""

import logging
from typing import Dict

import numpy as np

from physics.flow import (
    core_hematocrit,
    flow_reduction_ratio,
    solve_flow,
    trace_core_boundary,
    wall_force,
    with_core_speed,
)
from stages.base_stage import BaseStage

logger = logging.getLogger(__name__)


class FlowStage(BaseStage):
    stage_name = "flow"
    stage_description = "Lumen flow, wall force, cell core boundary and core hematocrit"
    dependencies = ['mesh']

    def run(self) -> Dict[str, float]:
        ctx = self.context
        flow = solve_flow(ctx.mesh, self.cfg)
        ctx.force = wall_force(flow, ctx.mesh, self.cfg)
        ctx.flow_reduction = flow_reduction_ratio(flow, self.cfg)

        if flow.total_flow > 0:
            boundary = trace_core_boundary(flow, ctx.mesh, self.cfg)
            flow = with_core_speed(flow, boundary)
            ctx.boundary = boundary
            ctx.mesh = ctx.mesh.with_core_boundary(boundary)
            ctx.hematocrit = core_hematocrit(self.cfg, flow, boundary, ctx.mesh)
            logger.info("Core hematocrit %.3f (variation %.2e), wall force %.3e N",
                        ctx.hematocrit.mean, ctx.hematocrit.variation, ctx.force.total)
        else:
            logger.warning("No pressure gradient: fluid at rest, no cell core")
        ctx.flow = flow
        return {
            'divergence': flow.divergence_residual,
            'linear': flow.linear_residual,
            'flow_reduction': ctx.flow_reduction,
        }

    def self_audit(self) -> bool:
        ctx = self.context
        ok = True
        if ctx.flow_reduction > 1.0 + 1e-6:
            self.flag(f"flow exceeds the robot-free tube ({ctx.flow_reduction:.4f})")
            ok = False
        if ctx.hematocrit is not None and not np.all((ctx.hematocrit.h > 0) & (ctx.hematocrit.h < 1)):
            self.flag("core hematocrit outside (0, 1)")
            ok = False
        return ok
