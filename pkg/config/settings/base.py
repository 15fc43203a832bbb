from pathlib import Path
from dotenv import load_dotenv
import os

load_dotenv()

BASE_DIR = Path(__file__).resolve().parent.parent.parent

SECRET_KEY = os.getenv('SECRET_KEY', 'django-insecure-tablekb-batch-toolkit-local-only')

INSTALLED_APPS = [
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',

    # Third party
    'rest_framework',

    # Local apps
    'apps.corpus',
    'apps.kb',
    'apps.sim',
    'apps.retrieve',
    'apps.learn',
    'apps.link',
    'apps.headmatch',
    'apps.discover',
    'apps.resolve',
    'apps.evaluation',
    'apps.pipeline',
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.contrib.sessions.middleware.SessionMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.csrf.CsrfViewMiddleware',
    'django.contrib.auth.middleware.AuthenticationMiddleware',
    'django.contrib.messages.middleware.MessageMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'config.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.request',
                'django.contrib.auth.context_processors.auth',
                'django.contrib.messages.context_processors.messages',
            ],
        },
    },
]

WSGI_APPLICATION = 'config.wsgi.application'

# The run log is the only ORM data; SQLite is enough on a desktop.
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': os.getenv('DB_NAME', str(BASE_DIR / 'db.sqlite3')),
    }
}

LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = True
USE_TZ = True

STATIC_URL = 'static/'
STATIC_ROOT = os.path.join(BASE_DIR, 'staticfiles')
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

REST_FRAMEWORK = {
    'DEFAULT_RENDERER_CLASSES': [
        'rest_framework.renderers.JSONRenderer',
    ],
}

LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')

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
        'apps': {'handlers': ['console'], 'level': LOG_LEVEL, 'propagate': False},
        'core': {'handlers': ['console'], 'level': LOG_LEVEL, 'propagate': False},
    },
}

# Pipeline defaults. Every key can be overridden by a run config file or a
# command-line flag; see apps.pipeline.serializers.PipelineConfigSerializer.
PIPELINE_DEFAULTS = {
    # retrieval
    'top_k': int(os.getenv('TABLEKB_TOP_K', '10')),
    'search_fields': os.getenv('TABLEKB_SEARCH_FIELDS', 'title'),
    'popularity_lambda': float(os.getenv('TABLEKB_POPULARITY_LAMBDA', '0.3')),
    'bm25_k1': 1.2,
    'bm25_b': 0.75,
    'content_weight': 0.3,
    # linking
    'expand_vote_types': os.getenv('TABLEKB_EXPAND_VOTE_TYPES', 'false').lower() == 'true',
    'type_fallback': os.getenv('TABLEKB_TYPE_FALLBACK', 'false').lower() == 'true',
    'disambiguation': os.getenv('TABLEKB_DISAMBIGUATION', 'rank'),
    'propagate': True,
    # discovery
    'wd_topk': int(os.getenv('TABLEKB_WD_TOPK', '1')),
    'wd_fields': os.getenv('TABLEKB_WD_FIELDS', 'title'),
    'collapse_identical_cores': os.getenv('TABLEKB_COLLAPSE_IDENTICAL_CORES', 'true').lower() == 'true',
    'discovery_features': os.getenv('TABLEKB_DISCOVERY_FEATURES', 'oss'),
    'discovery_mode': os.getenv('TABLEKB_DISCOVERY_MODE', 'binary'),
    'min_tables': int(os.getenv('TABLEKB_MIN_TABLES', '1')),
    # resolution
    'theta': float(os.getenv('TABLEKB_THETA', '0.95')),
    'surface_mode': os.getenv('TABLEKB_SURFACE_MODE', 'model'),
    'surface_features': os.getenv('TABLEKB_SURFACE_FEATURES', 'string+table'),
    'embedding_threshold': 0.95,
    'resolve_verdicts': os.getenv('TABLEKB_RESOLVE_VERDICTS', 'out_of_kb'),
    'candidate_window': 20,
    'candidate_neighbours': 5,
    'mention2vec_dim': int(os.getenv('TABLEKB_MENTION2VEC_DIM', '64')),
    'mention2vec_window': int(os.getenv('TABLEKB_MENTION2VEC_WINDOW', '5')),
    'mention2vec_negatives': int(os.getenv('TABLEKB_MENTION2VEC_NEGATIVES', '5')),
    'mention2vec_epochs': int(os.getenv('TABLEKB_MENTION2VEC_EPOCHS', '5')),
    'mention2vec_min_count': int(os.getenv('TABLEKB_MENTION2VEC_MIN_COUNT', '2')),
    # learner
    'n_trees': int(os.getenv('TABLEKB_N_TREES', '100')),
    'max_depth': int(os.getenv('TABLEKB_MAX_DEPTH', '12')),
    'min_samples_split': 2,
    'min_samples_leaf': 1,
    'cv_folds': 5,
    'seed': int(os.getenv('TABLEKB_SEED', '13')),
}
