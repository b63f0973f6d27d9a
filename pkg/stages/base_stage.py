"""Base class for pipeline stages."""

import logging
import time
from abc import ABC, abstractmethod
from datetime import datetime
from typing import Dict, List

from orchestrator.context_store import RunContext, StageRecord, StageStatus

logger = logging.getLogger(__name__)


class BaseStage(ABC):
    """
    Abstract base class for all pipeline stages.

    Each stage:
    - Reads the products of its dependencies from the RunContext
    - Runs one physics step and writes its products back
    - Reports residuals for the run manifest
    - Implements self_audit to flag results whose invariants do not hold
    """

    stage_name: str = "base"
    stage_description: str = "Base stage"
    dependencies: List[str] = []

    def __init__(self, context: RunContext, verbose: bool = False):
        self.context = context
        self.verbose = verbose
        self._record = None

    @property
    def record(self) -> StageRecord:
        """Get or create the stage's record."""
        if self._record is None:
            existing = self.context.get_record(self.stage_name)
            self._record = existing if existing is not None else StageRecord(stage_name=self.stage_name)
        return self._record

    @property
    def cfg(self):
        return self.context.cfg

    def can_run(self) -> bool:
        return not self.get_missing_dependencies()

    def get_missing_dependencies(self) -> List[str]:
        missing = []
        for dep in self.dependencies:
            record = self.context.get_record(dep)
            if record is None or not record.done:
                missing.append(dep)
        return missing

    @abstractmethod
    def run(self) -> Dict[str, float]:
        """
        Execute the stage.

        Returns:
            Residuals worth recording (name -> value)
        """

    def execute(self) -> StageRecord:
        """Run with status bookkeeping and error capture."""
        record = self.record
        if not self.can_run():
            missing = self.get_missing_dependencies()
            record.status = StageStatus.PENDING
            record.errors.append(f"Dependencies not met: {', '.join(missing)}")
            self.context.set_record(record)
            return record

        record.status = StageStatus.RUNNING
        record.started_at = datetime.now().isoformat()
        self.context.set_record(record)
        start = time.perf_counter()
        logger.info("Stage %s: %s", self.stage_name, self.stage_description)

        try:
            record.residuals.update(self.run())
            record.status = StageStatus.COMPLETED if self.self_audit() else StageStatus.FLAGGED
        except Exception as e:
            record.status = StageStatus.FAILED
            record.errors.append(str(e))
            record.exception = e
            logger.error("Stage %s failed: %s", self.stage_name, e)

        record.elapsed = time.perf_counter() - start
        record.completed_at = datetime.now().isoformat()
        logger.info("Stage %s %s in %.2f s", self.stage_name, record.status.value, record.elapsed)
        self.context.set_record(record)
        return record

    def flag(self, message: str):
        """Note a failed invariant; the stage ends FLAGGED instead of COMPLETED."""
        self.record.notes.append(message)
        logger.warning("[%s] %s", self.stage_name, message)

    def self_audit(self) -> bool:
        """
        Check the stage's own results.

        Override to implement invariant checks; call `flag` for each failure.

        Returns:
            True if the results pass, False to flag the stage
        """
        return True
