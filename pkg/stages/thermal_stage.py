"""Thermal stage - temperature rise from the power the robots generate."""

from typing import Dict

from physics.thermal import heated_region_contains_max, power_density, solve_heat
from stages.base_stage import BaseStage


class ThermalStage(BaseStage):
    stage_name = "thermal"
    stage_description = "Steady heat advection and conduction"
    dependencies = ['power']

    def run(self) -> Dict[str, float]:
        ctx = self.context
        ctx.power_density = power_density(ctx.concentration, ctx.power, self.cfg)
        ctx.temperature = solve_heat(ctx.mesh, ctx.flow, ctx.power_density, self.cfg)
        return {
            'max_rise_K': ctx.temperature.max_rise,
            'heat_balance': ctx.temperature.balance.relative_residual,
        }

    def self_audit(self) -> bool:
        ctx = self.context
        ok = True
        balance = ctx.temperature.balance
        if balance.relative_residual > self.cfg.solver.balance_tolerance:
            self.flag(f"heat balance residual {balance.relative_residual:.2%} of the generated power")
            ok = False
        if not heated_region_contains_max(ctx.mesh, ctx.temperature, ctx.power_density):
            self.flag("temperature maximum lies away from the heated robots")
            ok = False
        return ok
