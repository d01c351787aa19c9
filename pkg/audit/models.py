from django.db import models
from django.utils import timezone


class AnalysisRun(models.Model):
    """
    Ledger entry for one command invocation.
    Records what was run, under which configuration, and what came out.
    """

    class Status(models.TextChoices):
        RUNNING = 'running', 'Running'
        SUCCEEDED = 'succeeded', 'Succeeded'
        FAILED = 'failed', 'Failed'

    command = models.CharField(
        max_length=64,
        help_text='Management command name, e.g. diagnose'
    )
    status = models.CharField(
        max_length=16,
        choices=Status.choices,
        default=Status.RUNNING,
        help_text='Lifecycle state of the run'
    )
    verdict = models.CharField(
        max_length=32,
        blank=True,
        help_text='Diagnostic verdict, when the command produces one'
    )
    exit_code = models.IntegerField(
        null=True,
        blank=True,
        help_text='Process exit code reported to the shell'
    )
    config_hash = models.CharField(
        max_length=64,
        blank=True,
        help_text='SHA-256 of the canonical run configuration'
    )
    seed = models.IntegerField(
        default=0,
        help_text='Random seed the run was configured with'
    )
    config = models.JSONField(
        default=dict,
        blank=True,
        help_text='Full run configuration'
    )
    inputs = models.JSONField(
        default=dict,
        blank=True,
        help_text='Input artifact paths keyed by role'
    )
    artifacts = models.JSONField(
        default=list,
        blank=True,
        help_text='Paths of files written by the run'
    )
    message = models.TextField(
        blank=True,
        help_text='Summary line or error message'
    )
    started_at = models.DateTimeField(
        default=timezone.now,
        help_text='When the run started'
    )
    finished_at = models.DateTimeField(
        null=True,
        blank=True,
        help_text='When the run finished'
    )

    class Meta:
        ordering = ['-started_at']
        indexes = [
            models.Index(fields=['-started_at'], name='audit_run_started_idx'),
            models.Index(fields=['command', '-started_at'], name='audit_run_command_idx'),
            models.Index(fields=['config_hash'], name='audit_run_config_idx'),
        ]

    def __str__(self):
        outcome = self.verdict or self.get_status_display()
        return f"{self.command} @ {self.started_at:%Y-%m-%d %H:%M:%S} ({outcome})"

    @property
    def is_finished(self):
        return self.finished_at is not None

    @property
    def duration(self):
        """Elapsed time, up to now for a run still in progress."""
        if self.finished_at:
            return self.finished_at - self.started_at
        return timezone.now() - self.started_at
