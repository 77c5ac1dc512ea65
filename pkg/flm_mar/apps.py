from django.apps import AppConfig


class FlmMarConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'flm_mar'
    verbose_name = 'Functional linear model with MAR responses'

    def ready(self):
        # Registers the shared Celery tasks used by parallel.map_ordered.
        from . import tasks  # noqa: F401
