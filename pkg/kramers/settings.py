from __future__ import annotations

import json
import logging
import os
import sys
import warnings
from pathlib import Path

from lamb.json import JsonEncoder
from lamb.log.constants import LAMB_LOG_FORMAT_PREFIXNO, LAMB_LOG_FORMAT_SIMPLE
from lamb.log.utils import inject_logging_factory
from lamb.utils import dpath_value
from lamb.utils.transformers import transform_boolean

# warning
logging.captureWarnings(True)
warnings.filterwarnings("once", category=DeprecationWarning, module="lamb")
warnings.filterwarnings("once", category=DeprecationWarning, module="django")
warnings.filterwarnings("once", category=DeprecationWarning, module="core")

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Lamb: main configs
LAMB_APP_DEBUG = dpath_value(os.environ, "LAMB_APP_DEBUG", str, transform=transform_boolean, default=False)
LAMB_LOG_JSON_ENABLE = dpath_value(os.environ, "LAMB_LOG_JSON_ENABLE", str, transform=transform_boolean, default=False)
LAMB_LOG_FORMAT_TIME_ZONE = "UTC"
LAMB_LOG_FORMAT_TIME_SPEC = "milliseconds"

# Kramers: experiment engine
KRAMERS_THREADS = dpath_value(os.environ, "KRAMERS_THREADS", int, default=0)
KRAMERS_PATH_CHUNK = dpath_value(os.environ, "KRAMERS_PATH_CHUNK", int, default=100)
KRAMERS_NOISE_BLOCK = dpath_value(os.environ, "KRAMERS_NOISE_BLOCK", int, default=4096)
KRAMERS_QUARANTINE_FRACTION = dpath_value(os.environ, "KRAMERS_QUARANTINE_FRACTION", float, default=0.01)
KRAMERS_LOG_LEVEL = dpath_value(os.environ, "KRAMERS_LOG_LEVEL", str, default="INFO")

# Kramers: dynamic configs
KRAMERS_OUTPUT_FOLDER = dpath_value(
    os.environ,
    "KRAMERS_OUTPUT_FOLDER",
    str,
    transform=Path,
    default=BASE_DIR.joinpath("output"),
)

with open(os.path.join(BASE_DIR, "VERSION")) as f:
    KRAMERS_APP_VERSION = f.read()
    KRAMERS_APP_VERSION = "".join(KRAMERS_APP_VERSION.split())  # bump2version sometime adds \n symbol

# logging
_log_fmt_cls = "lamb.log.formatters.RequestJsonFormatter" if LAMB_LOG_JSON_ENABLE else "lamb.log.formatters.MultilineFormatter"
_log_fmt = LAMB_LOG_FORMAT_SIMPLE if sys.platform == "darwin" else LAMB_LOG_FORMAT_PREFIXNO

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "generic": {
            "format": _log_fmt,
            "class": _log_fmt_cls,
        },
    },
    "handlers": {
        "console": {
            "level": "DEBUG",
            "class": "logging.StreamHandler",
            "formatter": "generic",
            "stream": "ext://sys.stderr",
        }
    },
    "loggers": {
        "django": {
            "handlers": ["console"],
            "propagate": True,
            "level": "WARNING",
        },
        "core": {
            "handlers": ["console"],
            "propagate": True,
            "level": KRAMERS_LOG_LEVEL,
        },
        "cli": {
            "handlers": ["console"],
            "propagate": True,
            "level": KRAMERS_LOG_LEVEL,
        },
        "py.warnings": {
            "handlers": ["console"],
            "propagate": True,
            "level": "WARNING",
        },
    },
}
inject_logging_factory()

# django - main configs
SECRET_KEY = dpath_value(os.environ, "KRAMERS_SECRET_KEY", str, default="kramers-cli-has-no-web-surface")

DEBUG = LAMB_APP_DEBUG

INSTALLED_APPS = ["cli"]

DATABASES = {}

LANGUAGE_CODE = "en-US"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True

# collect main details and log
_msg = {
    "KRAMERS": dict(
        KRAMERS_APP_VERSION=KRAMERS_APP_VERSION,
        KRAMERS_THREADS=KRAMERS_THREADS,
        KRAMERS_PATH_CHUNK=KRAMERS_PATH_CHUNK,
        KRAMERS_NOISE_BLOCK=KRAMERS_NOISE_BLOCK,
        KRAMERS_QUARANTINE_FRACTION=KRAMERS_QUARANTINE_FRACTION,
        KRAMERS_OUTPUT_FOLDER=str(KRAMERS_OUTPUT_FOLDER),
        LAMB_LOG_JSON_ENABLE=LAMB_LOG_JSON_ENABLE,
    ),
}
logger = logging.getLogger("django")
_indent = 2 if sys.platform == "darwin" and not LAMB_LOG_JSON_ENABLE else None
logger.debug(f"configs: {json.dumps(_msg, indent=_indent, ensure_ascii=False, cls=JsonEncoder)}")
