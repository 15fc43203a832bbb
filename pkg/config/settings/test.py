from .base import *

DEBUG = False

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': ':memory:',
    }
}

LOGGING['loggers']['apps']['level'] = 'WARNING'
LOGGING['loggers']['core']['level'] = 'WARNING'

# Small ensembles keep the suite fast; determinism does not depend on size.
PIPELINE_DEFAULTS = {
    **PIPELINE_DEFAULTS,
    'n_trees': 15,
    'max_depth': 8,
    'mention2vec_dim': 16,
    'mention2vec_epochs': 3,
}
