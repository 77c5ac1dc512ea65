import os

from celery import Celery

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "application.settings")

app = Celery("flm")
app.config_from_object("django.conf:settings", namespace="CELERY")
app.autodiscover_tasks(["flm_mar"])
app.conf.task_routes = {"flm_mar.tasks.*": {"queue": "flm"}}
