import os
from pathlib import Path
import environ

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent.parent

env = environ.Env(DEBUG=(bool, False))
environ.Env.read_env(os.path.join(BASE_DIR, '.env'))

# The engine runs as management commands only; the key is still required by Django.
SECRET_KEY = env('SECRET_KEY', default='spellhaz-insecure-local-key')

# Application definition

INSTALLED_APPS = [
    'rest_framework',
    'apps.core',
    'apps.spells',
    'apps.sampling',
    'apps.cox',
    'apps.nonparametric',
    'apps.diagnostics',
    'apps.synthgen',
    'apps.pipeline',
    'apps.utils',
]

# No persistence: panels, spells and fits live in memory and in CSV/JSON artifacts.
DATABASES = {}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Engine settings
SPELLHAZ_SETTINGS = {
    'VERSION': '1.0.0',
    'TIES': 'efron',              # 'efron' or 'breslow'
    'MAX_ITER': 25,
    'TOL': 1e-9,                  # gradient max-norm
    'RANK_TOL': 1e-10,
    'SEPARATION_LIMIT': 20.0,     # |beta_j| * sd(x_j)
    'SIGNIFICANCE_LEVEL': 0.05,
    'SPELL_BIN_CAP': 4,
    'TRAIN_FRACTION': 0.7,
    'LAMBDA_N': 0.05,
    'HORIZONS': [3, 12, 24, 36],
    'THRESHOLD_STEP': 0.01,
    'TERM_STRUCTURE_HORIZON': 240,
    'CORRELATION_THRESHOLD': 0.6,
    'CSV_FLOAT_FORMAT': None,     # None writes the shortest round-trip repr
    'THREADS': env.int('SPELLHAZ_THREADS', default=os.cpu_count() or 1),
    'OUTPUT_DIR': env('SPELLHAZ_OUT_DIR', default=str(BASE_DIR / 'artifacts')),
}

# Logging configuration
LOG_LEVEL = env('SPELLHAZ_LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'file': {
            'level': 'INFO',
            'class': 'logging.FileHandler',
            'filename': env('SPELLHAZ_LOG_FILE', default=str(BASE_DIR / 'spellhaz.log')),
            'formatter': 'verbose',
            'delay': True,
        },
        'console': {
            'level': 'DEBUG',
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'apps': {
            'handlers': ['file'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}
