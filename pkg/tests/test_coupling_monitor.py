from __future__ import annotations

from orchestrator.coupling_monitor import CouplingMonitor
from physics.oxygen_transport import CouplingState


def _sweep(monitor, state, changes):
    for k, change in enumerate(changes, 1):
        state.iteration = k
        state.change_C = change
        state.change_S = 0.5 * change
        monitor(state)


def test_new_state_starts_a_new_solve():
    monitor = CouplingMonitor(max_iterations=50, tolerance=1e-6)
    first, second = CouplingState(), CouplingState()
    _sweep(monitor, first, [1e-1, 1e-3, 1e-7])
    first.converged = True
    _sweep(monitor, second, [1e-2, 1e-8])
    second.converged = True

    assert monitor.current_solve == 2
    assert [r.iteration for r in monitor.solve_history(1)] == [1, 2, 3]
    assert len(monitor.solve_history()) == 2
    results = monitor.results
    assert [r.iterations for r in results] == [3, 2]
    assert results[1].final_residuals == {'dC': 1e-8, 'dS': 5e-9}


def test_summary_reports_unconverged_solves():
    monitor = CouplingMonitor(max_iterations=3)
    converged, stuck = CouplingState(), CouplingState()
    _sweep(monitor, converged, [1e-3, 1e-9])
    converged.converged = True
    _sweep(monitor, stuck, [1e-1, 1e-2, 1e-3])

    summary = monitor.get_cycle_summary()
    assert summary['solves'] == 2
    assert summary['total_iterations'] == 5
    assert summary['converged_solves'] == 1
    assert summary['unconverged_solves'] == [2]


def test_stall_detection():
    monitor = CouplingMonitor(stall_window=4)
    state = CouplingState()
    _sweep(monitor, state, [1.0, 0.5, 0.25, 0.3, 0.3, 0.3, 0.3])
    assert monitor.is_stalled()

    falling = CouplingMonitor(stall_window=4)
    _sweep(falling, CouplingState(), [1.0, 0.5, 0.25, 0.12, 0.06, 0.03, 0.01])
    assert not falling.is_stalled()


def test_empty_monitor():
    summary = CouplingMonitor().get_cycle_summary()
    assert summary['solves'] == 0
    assert not summary['stalled']
    assert summary['final_residuals'] == {}
