"""
Django settings for the returnlab project.

The project has no web surface: it is driven through management commands
(`python manage.py returns|average|verify|bc_ratio|residues|counterexample`).

For more information on this file, see
https://docs.djangoproject.com/en/4.2/topics/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Only used by Django internals (signing); nothing in the lab is secret.
SECRET_KEY = os.environ.get("RETURNLAB_SECRET_KEY", "returnlab-insecure-local-key")

DEBUG = False

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "django.contrib.contenttypes",
    "ergodic",
]


# Database
# https://docs.djangoproject.com/en/4.2/ref/settings/#databases
# Holds the run ledger (ExperimentRun / CheckRecord).

DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": BASE_DIR / "db.sqlite3",
    }
}


# Internationalization
# https://docs.djangoproject.com/en/4.2/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True


# Default primary key field type
# https://docs.djangoproject.com/en/4.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"


# Logging
# https://docs.djangoproject.com/en/4.2/topics/logging/

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "lab": {
            "format": "{asctime} {levelname} {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "lab",
        },
    },
    "loggers": {
        "ergodic": {
            "handlers": ["console"],
            "level": os.environ.get("RETURNLAB_LOG_LEVEL", "INFO"),
            "propagate": False,
        },
    },
}


# Lab engineering constants. None of these values come from the mathematics:
# they are caps and horizons that turn measure-zero undecidable cases and
# runaway scans into loud errors. See ergodic/conf.py for the defaults.

RETURNLAB = {
    "VERSION": "0.1.0",
    # digits past the shift before a digit-tail comparison gives up
    "DIGIT_CAP": 4096,
    # partial quotients past the shift before a continued-fraction comparison gives up
    "CF_QUOTIENT_CAP": 512,
    # initial and maximal bit budget of the uniform big-real behind a seeded CF stream
    "CF_SAMPLER_BITS": 4096,
    "CF_SAMPLER_MAX_BITS": 1 << 22,
    # largest n scanned while looking for the next return
    "SCAN_HORIZON": 10**8,
    "BLOCK_SIZE": 1 << 16,
    "ROTATION_GUARD_BITS": 64,
    "EXACT_COVARIANCE_LIMIT": 10**4,
    "PROPERTY_P_MAX_N": 40,
    "PROPERTY_P_MAX_K": 4,
    "TREND_TOLERANCE": 0.05,
}
