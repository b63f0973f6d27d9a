"""Structured error types for the capillary power simulator."""

from typing import Dict, Optional


class SimulationError(Exception):
    """Base exception for simulation errors."""
    pass


class ConfigError(SimulationError):
    """Invalid scenario input (missing key, bad value, inconsistent geometry)."""
    def __init__(self, key: str, value, message: str):
        self.key = key
        self.value = value
        super().__init__(f"Config '{key}'={value!r}: {message}")


class MeshError(SimulationError):
    """Mesh construction or core-boundary tracing failed."""
    pass


class ConvergenceError(SimulationError):
    """A solver exhausted its iteration budget or produced an unusable residual."""
    def __init__(self, stage: str, iterations: int, residual: float, message: str = ""):
        self.stage = stage
        self.iterations = iterations
        self.residual = residual
        detail = message or "did not converge"
        super().__init__(
            f"{stage}: {detail} after {iterations} iterations (residual {residual:.3e})"
        )


class StageError(SimulationError):
    """Error raised by a pipeline stage; carries the last known residuals."""
    def __init__(self, stage_name: str, message: str, residuals: Optional[Dict[str, float]] = None):
        self.stage_name = stage_name
        self.residuals = residuals or {}
        if self.residuals:
            tail = ", ".join(f"{k}={v:.3e}" for k, v in sorted(self.residuals.items()))
            message = f"{message} [{tail}]"
        super().__init__(f"Stage '{stage_name}': {message}")
