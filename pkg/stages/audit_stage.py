"""Audit stage - conservation checks and comparisons against reference models."""

import logging
from typing import Dict

from physics.analytic import compare_krogh
from physics.oxygen_transport import species_balance_audit, upstream_influence, wall_concentration
from stages.base_stage import BaseStage

logger = logging.getLogger(__name__)


class AuditStage(BaseStage):
    stage_name = "audit"
    stage_description = "Oxygen balance, Krogh comparison and upstream influence"
    dependencies = ['thermal']

    def run(self) -> Dict[str, float]:
        ctx = self.context
        cfg = self.cfg
        field = ctx.concentration
        ctx.balance = species_balance_audit(field, ctx.saturation, ctx.flow, cfg)
        residuals = {'species_balance': ctx.balance.relative_residual}
        logger.info("Oxygen budget: in %.4e /s, robots %.4e /s, tissue %.4e /s, residual %.2e",
                    ctx.balance.influx, ctx.balance.robot_uptake, ctx.balance.tissue_uptake,
                    ctx.balance.relative_residual)

        if ctx.robot_free:
            mesh = field.mesh
            j = mesh.column_at(mesh.mid_aggregate_z())
            ctx.krogh = compare_krogh(mesh.rc[mesh.n_lumen:], field.C[mesh.n_lumen:, j], float(mesh.zc[j]),
                                      wall_concentration(field, j), cfg)
            residuals['krogh_deviation'] = ctx.krogh.max_deviation
            logger.info("Krogh profile vs full solve at z=%.1f um: max deviation %.2f%% of the wall value",
                        mesh.zc[j] * 1e6, 100.0 * ctx.krogh.max_deviation)

        if ctx.reference is not None:
            ctx.upstream = upstream_influence(field, ctx.reference)
            for distance, drop in sorted(ctx.upstream.items()):
                logger.info("Sleeve oxygen %.0f um upstream: %.2f%% below the robot-free value",
                            distance * 1e6, 100.0 * drop)
        return residuals

    def self_audit(self) -> bool:
        ctx = self.context
        ok = True
        if ctx.balance.relative_residual > self.cfg.solver.balance_tolerance:
            self.flag(f"oxygen balance residual {ctx.balance.relative_residual:.2%} of the influx")
            ok = False
        S = ctx.saturation.S
        if S.min() < 0.0 or S.max() > 1.0:
            self.flag("saturation outside [0, 1]")
            ok = False
        return ok
