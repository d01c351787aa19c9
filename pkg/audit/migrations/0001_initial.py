from django.db import migrations, models
import django.utils.timezone


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="AnalysisRun",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                (
                    "command",
                    models.CharField(
                        help_text="Management command name, e.g. diagnose",
                        max_length=64,
                    ),
                ),
                (
                    "status",
                    models.CharField(
                        choices=[
                            ("running", "Running"),
                            ("succeeded", "Succeeded"),
                            ("failed", "Failed"),
                        ],
                        default="running",
                        help_text="Lifecycle state of the run",
                        max_length=16,
                    ),
                ),
                (
                    "verdict",
                    models.CharField(
                        blank=True,
                        help_text="Diagnostic verdict, when the command produces one",
                        max_length=32,
                    ),
                ),
                (
                    "exit_code",
                    models.IntegerField(
                        blank=True,
                        help_text="Process exit code reported to the shell",
                        null=True,
                    ),
                ),
                (
                    "config_hash",
                    models.CharField(
                        blank=True,
                        help_text="SHA-256 of the canonical run configuration",
                        max_length=64,
                    ),
                ),
                (
                    "seed",
                    models.IntegerField(
                        default=0, help_text="Random seed the run was configured with"
                    ),
                ),
                (
                    "config",
                    models.JSONField(
                        blank=True, default=dict, help_text="Full run configuration"
                    ),
                ),
                (
                    "inputs",
                    models.JSONField(
                        blank=True,
                        default=dict,
                        help_text="Input artifact paths keyed by role",
                    ),
                ),
                (
                    "artifacts",
                    models.JSONField(
                        blank=True,
                        default=list,
                        help_text="Paths of files written by the run",
                    ),
                ),
                (
                    "message",
                    models.TextField(
                        blank=True, help_text="Summary line or error message"
                    ),
                ),
                (
                    "started_at",
                    models.DateTimeField(
                        default=django.utils.timezone.now,
                        help_text="When the run started",
                    ),
                ),
                (
                    "finished_at",
                    models.DateTimeField(
                        blank=True, help_text="When the run finished", null=True
                    ),
                ),
            ],
            options={
                "ordering": ["-started_at"],
                "indexes": [
                    models.Index(
                        fields=["-started_at"], name="audit_run_started_idx"
                    ),
                    models.Index(
                        fields=["command", "-started_at"],
                        name="audit_run_command_idx",
                    ),
                    models.Index(fields=["config_hash"], name="audit_run_config_idx"),
                ],
            },
        ),
    ]
