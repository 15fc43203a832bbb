"""
PipelineRun: append-only log of stage and full-pipeline invocations.

Stage outputs stay on disk; a row only records what ran, with which
configuration, and what it produced.
"""

from django.db import models


class PipelineRun(models.Model):

    STATUS_CHOICES = [
        ("running", "Running"),
        ("success", "Success"),
        ("failed", "Failed"),
    ]

    id = models.BigAutoField(primary_key=True)
    stage = models.CharField(max_length=40)
    status = models.CharField(max_length=10, choices=STATUS_CHOICES, default="running")
    config = models.JSONField(default=dict)
    manifest = models.JSONField(default=dict)
    error_message = models.TextField(blank=True, default="")

    started_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        db_table = "pipeline_runs"
        ordering = ["-started_at"]
        indexes = [
            models.Index(fields=["stage", "-started_at"], name="pipeline_run_stage_idx"),
            models.Index(fields=["status"], name="pipeline_run_status_idx"),
        ]

    def __str__(self):
        return f"{self.stage} - {self.status}"
