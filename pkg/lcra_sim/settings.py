"""
Django settings for the lcra_sim project.

The project has no database, no URLs and no templates: it exists to host the
``lcra`` app and its management commands (design, simulate, sweep, pep,
moments). Values can be overridden from the environment or a local ``.env``.
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# Load .env for local runs (optional)
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Only used by Django internals; nothing here is signed or served.
SECRET_KEY = os.environ.get('DJANGO_SECRET_KEY', 'lcra-sim-local-only')

DEBUG = os.environ.get('DJANGO_DEBUG', 'False') == 'True'

ALLOWED_HOSTS = []

# Application definition

INSTALLED_APPS = [
    'rest_framework',
    'lcra',
]

# No persistence layer: experiments read config files and write CSV.
DATABASES = {}

# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True

# Simulator defaults

LCRA = {
    'DEFAULT_TRIALS': int(os.environ.get('LCRA_TRIALS', '1000')),
    'WORKERS': int(os.environ.get('LCRA_WORKERS', '1')),
    'DEFAULT_DETECTOR': os.environ.get('LCRA_DETECTOR', 'cavi:5'),
}

# Logging

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'lcra': {
            'handlers': ['console'],
            'level': os.environ.get('LCRA_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}
