"""
Django settings for the spectral lab project.

The project has no web surface: it is driven entirely through management
commands (``python manage.py diagnose ...``). Django provides settings,
logging, the command framework and the ORM for the run ledger.
"""

import os
from pathlib import Path
import environ

# Initialize environ
BASE_DIR = Path(__file__).resolve().parent.parent
env = environ.Env()
environ.Env.read_env(os.path.join(BASE_DIR, '.env'))


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = env('DJANGO_SECRET_KEY', default='django-insecure-development-key')

DEBUG = env.bool('DJANGO_DEBUG', default=True)

ALLOWED_HOSTS = env.list('DJANGO_ALLOWED_HOSTS', default=['localhost', '127.0.0.1'])


# Application definition

INSTALLED_APPS = [
    "django.contrib.contenttypes",

    # Local
    "spectra.apps.SpectraConfig",
    "analysis.apps.AnalysisConfig",
    "audit.apps.AuditConfig",
]


# Database
# The ledger of command runs lives in SQLite next to the project.

DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": env('SPECTRAL_DB_PATH', default=str(BASE_DIR / "db.sqlite3")),
    }
}


# Internationalization

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"


# Numerical defaults for every run. Command-line flags override these;
# the effective values are hashed into each report.
SPECTRAL_DEFAULTS = {
    'ztol_abs': env.float('SPECTRAL_ZTOL_ABS', default=1e-12),
    'ztol_rel': env.float('SPECTRAL_ZTOL_REL', default=1e-10),
    'compat_tol': env.float('SPECTRAL_COMPAT_TOL', default=1e-9),
    'angle_min': env.float('SPECTRAL_ANGLE_MIN', default=1e-6),
    'normal_tol': env.float('SPECTRAL_NORMAL_TOL', default=1e-10),
    'tail_fraction': env.float('SPECTRAL_TAIL_FRACTION', default=0.5),
    'n_probe': env.float('SPECTRAL_N_PROBE', default=10.0),
    'min_samples': env.int('SPECTRAL_MIN_SAMPLES', default=8),
    'seed': env.int('SPECTRAL_SEED', default=0),
    'workers': env.int('SPECTRAL_WORKERS', default=1),
}

# Record every command invocation in audit.AnalysisRun
SPECTRAL_RECORD_RUNS = env.bool('SPECTRAL_RECORD_RUNS', default=True)


# Logging Configuration
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': 'INFO',
        },
        'spectra': {
            'handlers': ['console'],
            'level': env('SPECTRAL_LOG_LEVEL', default='INFO'),
            'propagate': True,
        },
        'analysis': {
            'handlers': ['console'],
            'level': env('SPECTRAL_LOG_LEVEL', default='INFO'),
            'propagate': True,
        },
        'audit': {
            'handlers': ['console'],
            'level': env('SPECTRAL_LOG_LEVEL', default='INFO'),
            'propagate': True,
        },
    },
}
