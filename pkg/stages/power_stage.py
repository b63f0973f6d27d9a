"""Power stage - per-ring and per-robot power, storage estimate, pump cost."""

import logging
from typing import Dict

from physics.analytic import PICO
from physics.robot_power import burst_storage_estimate, power_report, ring_position_profile
from stages.base_stage import BaseStage
from utils.errors import ConvergenceError
from utils.scenario import derived_quantities

logger = logging.getLogger(__name__)


class PowerStage(BaseStage):
    stage_name = "power"
    stage_description = "Robot power from oxygen uptake"
    dependencies = ['transport']

    def run(self) -> Dict[str, float]:
        ctx = self.context
        cfg = self.cfg
        if ctx.strategy is not None:
            coupling = ctx.strategy.coupling
            if not coupling.converged and not ctx.allow_unconverged:
                raise ConvergenceError("power", coupling.iteration, max(coupling.change_C, coupling.change_S),
                                       "refusing to report power from a non-converged transport solve")
            ctx.power = ctx.strategy.report
        else:
            ctx.power = power_report(ctx.concentration, cfg, ctx.coupling,
                                     allow_unconverged=ctx.allow_unconverged, design=ctx.design)
        if ctx.baseline is not None:
            ctx.baseline_power = power_report(ctx.baseline, cfg, allow_unconverged=True, design=ctx.design)
            logger.info("Strategy keeps %.1f%% of the full-absorb aggregate; min robot %.2f -> %.2f pW",
                        100.0 * ctx.power.aggregate_pW / max(ctx.baseline_power.aggregate_pW, 1e-300),
                        ctx.baseline_power.min_robot_pW, ctx.power.min_robot_pW)

        if ctx.power.ring_power_pW.size:
            ctx.ring_profile = ring_position_profile(ctx.power)
        ctx.burst = burst_storage_estimate(cfg, ctx.power.aggregate_uptake)
        return {
            'aggregate_pW': ctx.power.aggregate_pW,
            'mean_robot_pW': ctx.power.mean_robot_pW,
        }

    def self_audit(self) -> bool:
        ctx = self.context
        ok = True
        ceiling = derived_quantities(self.cfg).max_robot_power * PICO
        if ctx.power.ring_power_pW.size and ctx.power.per_robot_pW.max() > ceiling * (1.0 + 1e-6):
            self.flag(f"robot power {ctx.power.per_robot_pW.max():.2f} pW exceeds the capacity {ceiling:.2f} pW")
            ok = False
        if ctx.ring_profile is not None and len(ctx.ring_profile.per_robot_pW) > 2 \
                and not ctx.ring_profile.has_edge_effects:
            self.flag("per-ring power lacks the upstream maximum / downstream recovery")
            ok = False
        return ok
