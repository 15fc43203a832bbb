from .base import *
from decouple import config

DEBUG = False

ALLOWED_HOSTS = config('ALLOWED_HOSTS', default='localhost').split(',')

# Shared run log for batch hosts that keep the audit trail in PostgreSQL.
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.postgresql',
        'NAME': config('DB_NAME'),
        'USER': config('DB_USER'),
        'PASSWORD': config('DB_PASSWORD'),
        'HOST': config('DB_HOST'),
        'PORT': config('DB_PORT', default='5432'),
        'OPTIONS': {
            'connect_timeout': 5,
        },
    }
}

LOG_LEVEL = config('LOG_LEVEL', default='WARNING')
LOGGING['loggers']['apps']['level'] = LOG_LEVEL
LOGGING['loggers']['core']['level'] = LOG_LEVEL
