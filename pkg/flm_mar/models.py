from django.db import models

from .choices import Command


class RunManifest(models.Model):
    command = models.CharField(choices=Command.choices, max_length=16)
    config = models.JSONField(default=dict)
    seed = models.BigIntegerField(null=True, blank=True)
    version = models.CharField(max_length=32)
    input_digests = models.JSONField(default=dict)
    outputs = models.JSONField(default=list)
    wall_time = models.FloatField(null=True, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ["-created_at"]

    def __str__(self):
        return f"{self.command} seed={self.seed} ({self.created_at:%Y-%m-%d %H:%M})"
