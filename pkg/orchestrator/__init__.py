"""Orchestrator package for pipeline coordination."""

from .context_store import RunContext, RunManifest, StageRecord, StageStatus
from .coupling_monitor import CouplingMonitor
from .orchestrator import Orchestrator, run_pipeline, run_matrix, design_matrix_cells

__all__ = [
    'RunContext', 'RunManifest', 'StageRecord', 'StageStatus',
    'CouplingMonitor',
    'Orchestrator', 'run_pipeline', 'run_matrix', 'design_matrix_cells',
]
