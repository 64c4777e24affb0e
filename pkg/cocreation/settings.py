"""
Django settings for the cocreation project.

The project has no web surface: it hosts the ``crp`` application, whose
solvers and experiments are driven through ``manage.py crp ...``.
"""

from pathlib import Path
import os

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get('SECRET_KEY', 'django-insecure-cocreation-local-only')

DEBUG = os.environ.get('DEBUG', 'False').lower() in ('1', 'true', 'yes')

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'crp',  # Company response policy solvers
]

# No database: every result is written to CSV/JSON files.
DATABASES = {}


# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True


# Solver and experiment defaults, read through crp.conf.crp_settings()
CRP = {
    'GRID_N': 5000,
    'EPSILON': 1e-6,
    'MAX_ITERATIONS': 100,
    'RELAXATION': 0.0,
    'RANDOM_COUNT': 100,
    'SEED': 20240101,
    'THREADS': int(os.environ.get('CRP_THREADS', '1')),
    'DP': {
        'N': 50,
        'M': 400,
        'P': 50,
        'LAMBDA': 0.1,
        'MODE': 'corrected',
    },
    'REPLICATES': 20,
    'REPLICATE_SPREAD': 0.2,
    'CSV_FLOAT_FORMAT': '%.12g',
}


# Logging
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
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
        'crp': {
            'handlers': ['console'],
            'level': os.environ.get('CRP_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}
