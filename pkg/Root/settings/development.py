from .base import *

DEBUG = True

ALLOWED_HOSTS = ['*']

# Logging: engine messages on the console as well as the log file
LOGGING['loggers']['apps'] = {
    'handlers': ['console', 'file'],
    'level': env('SPELLHAZ_LOG_LEVEL', default='DEBUG'),
    'propagate': False,
}
