"""Bookkeeping for the oxygen / saturation fixed-point iteration."""

import logging
from dataclasses import dataclass
from datetime import datetime
from typing import Dict, List, Optional

from physics.oxygen_transport import CouplingState

logger = logging.getLogger(__name__)


@dataclass
class IterationRecord:
    """Residuals after one Picard sweep."""
    solve: int
    iteration: int
    change_C: float
    change_S: float
    recorded_at: str = ""


@dataclass
class SolveResult:
    """Outcome of one coupled solve (a bisection probe, a duty phase, or the plain solve)."""
    solve: int
    iterations: int
    converged: bool
    capacity_rounds: int
    final_residuals: Dict[str, float]


class CouplingMonitor:
    """
    Records the residual history of coupled solves.

    Pass an instance as the `on_iteration` callback of `solve_coupled` (or of the pump
    strategies, which forward it). A new CouplingState object marks a new solve.
    """

    def __init__(self, max_iterations: int = 200, tolerance: float = 1e-6, stall_window: int = 25):
        self.max_iterations = max_iterations
        self.tolerance = tolerance
        self.stall_window = stall_window
        self.history: List[IterationRecord] = []
        self._states: List[CouplingState] = []

    @property
    def current_solve(self) -> int:
        return len(self._states)

    def __call__(self, state: CouplingState):
        if not self._states or self._states[-1] is not state:
            self._states.append(state)
            logger.debug("Coupled solve %d started", self.current_solve)
        self.history.append(IterationRecord(
            solve=self.current_solve,
            iteration=state.iteration,
            change_C=state.change_C,
            change_S=state.change_S,
            recorded_at=datetime.now().isoformat(),
        ))

    @property
    def results(self) -> List[SolveResult]:
        return [
            SolveResult(solve=k, iterations=s.iteration, converged=s.converged,
                        capacity_rounds=s.capacity_rounds, final_residuals=dict(s.residuals))
            for k, s in enumerate(self._states, 1)
        ]

    def solve_history(self, solve: Optional[int] = None) -> List[IterationRecord]:
        solve = self.current_solve if solve is None else solve
        return [r for r in self.history if r.solve == solve]

    def is_stalled(self, solve: Optional[int] = None) -> bool:
        """No reduction of the larger residual over the last `stall_window` sweeps."""
        records = self.solve_history(solve)
        if len(records) <= self.stall_window:
            return False
        recent = [max(r.change_C, r.change_S) for r in records[-self.stall_window - 1:]]
        return min(recent[1:]) >= recent[0]

    def get_cycle_summary(self) -> Dict:
        results = self.results
        unconverged = [r.solve for r in results if not r.converged]
        if unconverged:
            logger.warning("%d of %d coupled solves stopped at the %d-iteration budget",
                           len(unconverged), len(results), self.max_iterations)
        return {
            'solves': len(results),
            'total_iterations': len(self.history),
            'converged_solves': len(results) - len(unconverged),
            'unconverged_solves': unconverged,
            'stalled': self.is_stalled() if results else False,
            'max_iterations': self.max_iterations,
            'tolerance': self.tolerance,
            'final_residuals': results[-1].final_residuals if results else {},
        }
