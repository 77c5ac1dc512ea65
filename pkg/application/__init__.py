# Shared tasks bind to this app once Django loads the project.
from .celery import app as celery_app

__all__ = ("celery_app",)
