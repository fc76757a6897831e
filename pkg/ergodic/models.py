from django.db import models
from django.utils import timezone


class ExperimentRun(models.Model):
    """
    One invocation of a lab command. The emitted files are the results;
    this row only records what ran, with which config and how it ended.
    """

    class Status(models.TextChoices):
        RUNNING = "running", "The run has started"
        PASSED = "passed", "The run finished and every check passed"
        FAILED = "failed", "At least one verification check failed"
        CONFIG_ERROR = "config_error", "The configuration was rejected"
        EXHAUSTED = "exhausted", "A precision cap or the scan horizon was reached"

    command = models.CharField(max_length=50)
    config_hash = models.CharField(max_length=64, help_text="SHA-256 of the normalized config lines")
    config_path = models.CharField(max_length=500, blank=True)
    seeds = models.JSONField(default=list)
    version = models.CharField(max_length=20)
    status = models.CharField(choices=Status.choices, default=Status.RUNNING, max_length=20)
    exit_code = models.IntegerField(blank=True, null=True)
    out_dir = models.CharField(max_length=500, blank=True)
    message = models.TextField(blank=True)
    started_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(blank=True, null=True)

    def __str__(self):
        return f"{self.command} {self.config_hash[:12]} ({self.status})"

    def finish(self, status: str, exit_code: int, message: str = "") -> None:
        self.status = status
        self.exit_code = exit_code
        self.message = message
        self.finished_at = timezone.now()
        self.save(update_fields=["status", "exit_code", "message", "finished_at"])


class CheckRecord(models.Model):
    """A verification record of a ``verify`` run."""

    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name="checks")
    check_name = models.CharField(max_length=100)
    parameters = models.JSONField(default=dict)
    passed = models.BooleanField()
    measured = models.JSONField(blank=True, null=True)
    bound = models.JSONField(blank=True, null=True)
    witness = models.JSONField(blank=True, null=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ("run", "id")

    @classmethod
    def from_record(cls, run: ExperimentRun, record: dict) -> "CheckRecord":
        return cls(
            run=run,
            check_name=record["check_name"],
            parameters=record["parameters"],
            passed=record["pass"],
            measured=record["measured"],
            bound=record["bound"],
            witness=record["witness"],
        )
