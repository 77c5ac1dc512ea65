"""
Django settings for the FLM-MAR project.

The project has no web surface: Django provides settings, the ORM for run
manifests, the cache used by the covariate generator and the management
command that implements the CLI.

For the full list of Django settings and their values, see
https://docs.djangoproject.com/en/4.1/ref/settings/
"""

import os
from pathlib import Path


def env_bool(name, default=False):
    value = os.environ.get(name)
    if value is None:
        return default
    return value.strip().lower() in ("1", "true", "yes", "on")


# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.environ.get('DJANGO_SECRET_KEY', 'django-insecure-flm-mar-local-only')

DEBUG = env_bool('DJANGO_DEBUG', False)

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'rest_framework',
    'flm_mar',
]


# Database

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': os.environ.get('FLM_DATABASE', BASE_DIR / 'db.sqlite3'),
    }
}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

TIME_ZONE = 'UTC'

USE_TZ = True


# Celery

CELERY_BROKER_URL = os.environ.get('CELERY_BROKER_URL', 'redis://redis:6379/0')
CELERY_RESULT_BACKEND = os.environ.get('CELERY_RESULT_BACKEND', 'redis://redis:6379/0')
CELERY_IMPORTS = [
    "flm_mar.tasks",
]
CELERY_TASK_SERIALIZER = 'pickle'
CELERY_RESULT_SERIALIZER = 'pickle'
CELERY_ACCEPT_CONTENT = ['pickle', 'json']
CELERY_TASK_ALWAYS_EAGER = env_bool('CELERY_TASK_ALWAYS_EAGER', True)


# CACHE

REDIS_URL = os.environ.get('REDIS_URL')

if REDIS_URL:
    CACHES = {
        "default": {
            "BACKEND": "django_redis.cache.RedisCache",
            "LOCATION": REDIS_URL,
            "OPTIONS": {
                "CLIENT_CLASS": "django_redis.client.DefaultClient"
            },
            "KEY_PREFIX": "flm"
        }
    }
else:
    CACHES = {
        "default": {
            "BACKEND": "django.core.cache.backends.locmem.LocMemCache",
            "LOCATION": "flm",
        }
    }


# LOGGING

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s %(levelname)s %(name)s %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'flm_mar': {
            'handlers': ['console'],
            'level': os.environ.get('FLM_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}


# FLM

FLM = {
    'VAR_CUTOFF': float(os.environ.get('FLM_VAR_CUTOFF', 0.005)),
    'K_MAX': None,
    'COEFFICIENT_RULE': os.environ.get('FLM_COEFFICIENT_RULE', 'verbatim'),
    'PROBABILITY_FLOOR': 0.05,
    'BANDWIDTH_FACTORS': [round(0.1 * k, 1) for k in range(1, 16)],
    'LASSO_LAMBDAS': 100,
    'LASSO_LAMBDA_RATIO': 1e-4,
    'LASSO_FOLDS': 10,
    'BOOTSTRAP': 1000,
    'ALPHA': 0.05,
    'THREADS': int(os.environ.get('FLM_THREADS', os.cpu_count() or 1)),
    'USE_CELERY': env_bool('FLM_USE_CELERY', False),
    'RUN_ACCEPTANCE': env_bool('FLM_RUN_ACCEPTANCE', False),
    'MC_SCALED': {'REPLICATIONS': 200, 'BOOTSTRAP': 500},
    'MC_FULL': {'REPLICATIONS': 1000, 'BOOTSTRAP': 1000},
}


# TEST

TEST_DISCOVER_TOP_LEVEL_DIRS = [
    os.path.join(BASE_DIR, 'flm_mar'),
]
TEST_DISCOVER_PATTERN = "test_*.py"
