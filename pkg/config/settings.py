"""This file handles the settings logic for the config part of the project."""

import os

DEBUG = os.getenv("FLASK_DEBUG", "false").lower() in ("1", "true", "yes")
LOG_LEVEL = os.getenv("LOG_LEVEL", "")

# Experiment outputs; overrides experiment.output_dir when set.
MGRLAB_OUTPUT_DIR = os.getenv("MGRLAB_OUTPUT_DIR", "")
MGRLAB_WORKERS = int(os.getenv("MGRLAB_WORKERS", "1"))

# SQLAlchemy (run registry).
SQLALCHEMY_DATABASE_URI = os.getenv("DATABASE_URL", "sqlite:///mgrlab.db")
SQLALCHEMY_TRACK_MODIFICATIONS = False

# Redis.
REDIS_URL = os.getenv("REDIS_URL", "redis://localhost:6379/0")

# Celery.
CELERY_ALWAYS_EAGER = os.getenv("CELERY_ALWAYS_EAGER", "true").lower() in (
    "1",
    "true",
    "yes",
)
CELERY_CONFIG = {
    "broker_url": REDIS_URL,
    "result_backend": REDIS_URL,
    "include": ["mgrlab.experiment.tasks"],
    "task_always_eager": CELERY_ALWAYS_EAGER,
    "worker_concurrency": MGRLAB_WORKERS,
    "task_serializer": "json",
    "result_serializer": "json",
}
