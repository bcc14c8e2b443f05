"""This file keeps shared fixtures for the test suite."""

import os

# The module-level Celery app reads settings at import time.
os.environ.setdefault("DATABASE_URL", "sqlite://")
os.environ.setdefault("CELERY_ALWAYS_EAGER", "true")

import pytest  # noqa: E402

from mgrlab.app import create_app  # noqa: E402
from mgrlab.bench import BenchmarkSpec, make_benchmark  # noqa: E402
from mgrlab.diffcore import RngStream  # noqa: E402
from mgrlab.extensions import db as _db  # noqa: E402
from mgrlab.metalearn import MetaConfig  # noqa: E402


# This function handles the app work for this file.
@pytest.fixture(scope="session")
def app():
    """
    Setup our flask test app, this only gets executed once.

    :return: Flask app
    """
    params = {
        "DEBUG": False,
        "TESTING": True,
        "SQLALCHEMY_DATABASE_URI": "sqlite://",
        "MGRLAB_OUTPUT_DIR": "",
    }

    _app = create_app(settings_override=params)

    # Establish an application context before running the tests.
    ctx = _app.app_context()
    ctx.push()

    yield _app

    ctx.pop()


# This function handles the db work for this file.
@pytest.fixture(scope="session")
def db(app):
    """
    Setup our database, this only gets executed once per session.

    :param app: Pytest fixture
    :return: SQLAlchemy database session
    """
    _db.drop_all()
    _db.create_all()

    return _db


# This function handles the session work for this file.
@pytest.fixture(scope="function")
def session(db):
    """
    Hand each test the registry session and empty the tables afterwards.

    The registry commits per cell, so a savepoint rollback would not undo
    its writes.

    :param db: Pytest fixture
    :return: None
    """
    yield db.session

    db.session.rollback()
    for table in reversed(db.metadata.sorted_tables):
        db.session.execute(table.delete())
    db.session.commit()


# ---------------------------------------------------------------------------
# Numeric fixtures
# ---------------------------------------------------------------------------

@pytest.fixture
def rng():
    return RngStream(1234, "test")


@pytest.fixture(scope="session")
def tiny_spec():
    return BenchmarkSpec(
        num_classes=3, n=60, test_size=90, leak_rate=0.3, seed=11
    )


@pytest.fixture(scope="session")
def tiny_benchmark(tiny_spec):
    return make_benchmark(tiny_spec)


@pytest.fixture(scope="session")
def tiny_training():
    """Small enough that a full cell trains in well under a second."""
    return MetaConfig(
        epochs=3,
        batch_size=18,
        pseudo_batch_size=12,
        val_batch_size=6,
        hidden=(12,),
        feature_dim=6,
        frechet_samples=48,
    )
