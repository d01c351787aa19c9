"""
Run ledger service.

``record_run`` wraps a command body, creating an ``AnalysisRun`` up front and
closing it with the outcome. The ledger is best effort: if the database is
missing or unmigrated the run still happens and a warning is logged.
"""

import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Union

from django.conf import settings
from django.core.management.base import CommandError
from django.db import DatabaseError
from django.utils import timezone

from audit.models import AnalysisRun

logger = logging.getLogger(__name__)


class RunRecorder:
    """Collects outcome details while a command runs."""

    def __init__(self, run: Optional[AnalysisRun]):
        self.run = run
        self.verdict = ''
        self.exit_code: Optional[int] = None
        self.artifacts: List[str] = []
        self.message = ''

    @property
    def recording(self) -> bool:
        return self.run is not None

    def add_artifact(self, path: Union[str, Path]) -> None:
        self.artifacts.append(str(path))

    def update_config(self, config: Any) -> None:
        """Record the configuration actually used, once the inputs have refined it."""
        if self.run is not None:
            self.run.config_hash = config.config_hash()
            self.run.seed = config.seed
            self.run.config = config.as_dict()

    def set_verdict(self, verdict: str, exit_code: int) -> None:
        self.verdict = str(verdict)
        self.exit_code = exit_code


def _save(run: AnalysisRun) -> bool:
    try:
        run.save()
        return True
    except DatabaseError as exc:
        logger.warning(f"could not record {run.command} run in the ledger: {exc}")
        return False


@contextmanager
def record_run(
    command: str,
    config: Any = None,
    inputs: Optional[Dict[str, Any]] = None,
    enabled: bool = True,
) -> Iterator[RunRecorder]:
    """
    Ledger a command invocation. ``config`` is a RunConfig (or None);
    exceptions are recorded as failures and re-raised.
    """
    run = None
    if enabled and getattr(settings, 'SPECTRAL_RECORD_RUNS', True):
        run = AnalysisRun(
            command=command,
            config_hash=config.config_hash() if config is not None else '',
            seed=config.seed if config is not None else 0,
            config=config.as_dict() if config is not None else {},
            inputs={key: str(value) for key, value in (inputs or {}).items() if value is not None},
        )
        if not _save(run):
            run = None

    recorder = RunRecorder(run)
    try:
        yield recorder
    except Exception as exc:
        if run is not None:
            run.status = AnalysisRun.Status.FAILED
            run.exit_code = exc.returncode if isinstance(exc, CommandError) else 1
            run.verdict = recorder.verdict
            run.message = str(exc)[:2000]
            run.artifacts = recorder.artifacts
            run.finished_at = timezone.now()
            _save(run)
        raise
    if run is not None:
        run.status = AnalysisRun.Status.SUCCEEDED
        run.verdict = recorder.verdict
        run.exit_code = recorder.exit_code if recorder.exit_code is not None else 0
        run.message = recorder.message
        run.artifacts = recorder.artifacts
        run.finished_at = timezone.now()
        _save(run)
