from Root.settings.base import *

DEBUG = False

ALLOWED_HOSTS = []

# Logging: batch runs write INFO and above to file only
LOGGING['handlers']['file']['level'] = 'INFO'
LOGGING['loggers']['apps'] = {
    'handlers': ['file'],
    'level': 'INFO',
    'propagate': False,
}
