"""
Django settings for the hybridquery project.

Every tunable is read from the environment, with a ``.env`` file in the project
root loaded first. See ``.env.example`` for the recognised variables.
"""

import os
from pathlib import Path

from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

load_dotenv(BASE_DIR / '.env')


def env_bool(name, default):
    value = os.getenv(name)
    if value is None:
        return default
    return value.strip().lower() in ('1', 'true', 'yes', 'on')


def env_int(name, default):
    value = os.getenv(name)
    return int(value) if value not in (None, '') else default


# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = env_bool('DEBUG', True)

SECRET_KEY = os.getenv('SECRET_KEY')

if SECRET_KEY is None:
    if not DEBUG:
        raise ValueError("SECRET_KEY is not set in .env file")
    SECRET_KEY = 'django-insecure-development-only-key'

ALLOWED_HOSTS = [host for host in os.getenv('ALLOWED_HOSTS', 'localhost,127.0.0.1').split(',') if host]


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'django.contrib.staticfiles',
    'corsheaders',
    'rest_framework',
    'drf_spectacular',
    'verifiable',
]

MIDDLEWARE = [
    'corsheaders.middleware.CorsMiddleware',
    'django.middleware.security.SecurityMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'hybridquery.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.debug',
                'django.template.context_processors.request',
            ],
        },
    },
]

WSGI_APPLICATION = 'hybridquery.wsgi.application'


# The middleware keeps its state in the block log under STATE_DIR; the
# database only backs Django's own bookkeeping.

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}


LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True


STATIC_URL = '/static/'
STATIC_ROOT = BASE_DIR / 'staticfiles'

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Verifiable query middleware

HYBRIDQUERY = {
    'THRESHOLD_T': env_int('HYBRIDQUERY_THRESHOLD_T', 10),
    'BRANCHING': env_int('HYBRIDQUERY_BRANCHING', 16),
    'INDEX_VARIANT': os.getenv('HYBRIDQUERY_INDEX_VARIANT', 'bhash'),
    'BLOOM_BITS': env_int('HYBRIDQUERY_BLOOM_BITS', 2**20),
    'BLOOM_HASHES': env_int('HYBRIDQUERY_BLOOM_HASHES', 7),
    'GAS_COST_TABLE': {
        'write': env_int('HYBRIDQUERY_GAS_WRITE', 20000),
        'read': env_int('HYBRIDQUERY_GAS_READ', 800),
        'compute': env_int('HYBRIDQUERY_GAS_COMPUTE', 1),
    },
    'PLAN_COST_TABLE': {},
    'MAX_PAYLOAD_BYTES': env_int('HYBRIDQUERY_MAX_PAYLOAD_BYTES', 64 * 1024 * 1024),
    'FETCH_WORKERS': env_int('HYBRIDQUERY_FETCH_WORKERS', 8),
    'STATE_DIR': os.getenv('HYBRIDQUERY_STATE_DIR') or None,
    'USE_CACHE': env_bool('HYBRIDQUERY_USE_CACHE', True),
}


# Django Rest Framework

REST_FRAMEWORK = {
    'DEFAULT_RENDERER_CLASSES': [
        'rest_framework.renderers.JSONRenderer',
    ],
    'DEFAULT_PARSER_CLASSES': [
        'rest_framework.parsers.JSONParser',
    ],
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'DEFAULT_PERMISSION_CLASSES': [
        'rest_framework.permissions.AllowAny',
    ],
    'UNAUTHENTICATED_USER': None,
    'DEFAULT_SCHEMA_CLASS': 'drf_spectacular.openapi.AutoSchema',
}

SPECTACULAR_SETTINGS = {
    'TITLE': 'hybridquery',
    'DESCRIPTION': 'Verifiable SQL queries over a hybrid on-chain/off-chain store',
    'VERSION': '1.0.0',
}


# CORS

CORS_ALLOW_ALL_ORIGINS = False
CORS_ALLOWED_ORIGINS = [origin for origin in os.getenv('CORS_ALLOWED_ORIGINS', 'http://localhost:3000').split(',') if origin]
CORS_ALLOW_METHODS = [
    'GET',
    'OPTIONS',
    'POST',
]


# Logging

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': os.getenv('LOG_LEVEL', 'INFO'),
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': os.getenv('DJANGO_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
        'verifiable': {
            'handlers': ['console'],
            'level': os.getenv('LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}
