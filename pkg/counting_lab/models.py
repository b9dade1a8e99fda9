from django.db import models


class ScenarioRun(models.Model):
    """One invocation of the pipeline and where its reports went."""

    STATUS_RUNNING = 'running'
    STATUS_PASSED = 'passed'
    STATUS_FAILED = 'failed'
    STATUS_CHOICES = [
        (STATUS_RUNNING, 'Running'),
        (STATUS_PASSED, 'Passed'),
        (STATUS_FAILED, 'Failed'),
    ]

    name = models.CharField(max_length=200)
    seed = models.PositiveIntegerField(default=0)
    truncation = models.PositiveIntegerField()
    status = models.CharField(max_length=16, choices=STATUS_CHOICES, default=STATUS_RUNNING)
    exit_code = models.IntegerField(null=True, blank=True)
    stage = models.CharField(max_length=32, blank=True)
    output_dir = models.CharField(max_length=500)
    manifest = models.JSONField(default=dict, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        ordering = ['-created_at', '-id']

    def __str__(self):
        return f"{self.name} (seed {self.seed}, M={self.truncation}): {self.status}"

    def finish(self, result):
        self.exit_code = result.exit_code
        self.status = self.STATUS_PASSED if result.passed else self.STATUS_FAILED
        self.stage = result.stage or ''
        self.manifest = result.manifest
        self.save()
        return self

    def to_dict(self, with_manifest=False):
        data = {
            'id': self.pk,
            'name': self.name,
            'seed': self.seed,
            'truncation': self.truncation,
            'status': self.status,
            'exit_code': self.exit_code,
            'stage': self.stage,
            'output_dir': self.output_dir,
            'created_at': self.created_at.isoformat() if self.created_at else None,
        }
        if with_manifest:
            data['manifest'] = self.manifest
        return data
