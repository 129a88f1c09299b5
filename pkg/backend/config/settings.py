from pathlib import Path

import environ

env = environ.Env()
environ.Env.read_env()

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = env('SECRET_KEY', default='agebif-local-only')
DEBUG = env.bool('DEBUG', False)
ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',

    # Third party
    'rest_framework',

    # Local apps
    'apps.common',
    'apps.grid',
    'apps.evolve',
    'apps.spectral',
    'apps.branches',
    'apps.continuation',
    'apps.dynamics',
    'apps.studies',
]

# No models are stored; Django only needs a connection to boot
DATABASES = {
    'default': env.db('DATABASE_URL', default='sqlite://:memory:'),
}
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'
USE_TZ = True

# Celery: eager by default so sweeps run in-process without a broker
CELERY_TASK_ALWAYS_EAGER = env.bool('CELERY_TASK_ALWAYS_EAGER', True)
CELERY_TASK_EAGER_PROPAGATES = True
CELERY_BROKER_URL = env('CELERY_BROKER_URL', default='memory://')
CELERY_RESULT_BACKEND = env('CELERY_RESULT_BACKEND', default='cache+memory://')
CELERY_ACCEPT_CONTENT = ['json']
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'

# agebif
AGEBIF_OUTPUT_DIR = env('AGEBIF_OUTPUT_DIR', default='out')
AGEBIF_METRICS_FILE = env('AGEBIF_METRICS_FILE', default='')
AGEBIF_LOG_LEVEL = env('AGEBIF_LOG_LEVEL', default='INFO')
AGEBIF_LOG_DIR = Path(env('AGEBIF_LOG_DIR', default=str(BASE_DIR / 'logs')))
AGEBIF_LOG_FILE = env.bool('AGEBIF_LOG_FILE', False)

# Logging
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'colored': {
            '()': 'colorlog.ColoredFormatter',
            'format': '%(log_color)s%(asctime)s - %(name)s - %(levelname)s - %(message)s%(reset)s',
            'datefmt': '%Y-%m-%d %H:%M:%S',
            'log_colors': {
                'DEBUG': 'cyan',
                'INFO': 'green',
                'WARNING': 'yellow',
                'ERROR': 'red',
                'CRITICAL': 'red,bg_white',
            },
        },
        'plain': {
            'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stderr',
            'formatter': 'colored',
        },
    },
    'loggers': {
        'apps': {
            'handlers': ['console'],
            'level': AGEBIF_LOG_LEVEL,
            'propagate': False,
        },
        'celery': {
            'handlers': ['console'],
            'level': 'WARNING',
            'propagate': False,
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
}

if AGEBIF_LOG_FILE:
    AGEBIF_LOG_DIR.mkdir(parents=True, exist_ok=True)
    LOGGING['handlers']['file'] = {
        'class': 'logging.handlers.RotatingFileHandler',
        'filename': AGEBIF_LOG_DIR / 'agebif.log',
        'formatter': 'plain',
        'maxBytes': 10 * 1024 * 1024,  # 10MB
        'backupCount': 5,
    }
    LOGGING['loggers']['apps']['handlers'].append('file')
