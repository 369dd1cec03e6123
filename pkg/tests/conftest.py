import numpy as np
import pytest

import services
from plate_generator import assemble_generator
from plate_model import make_model
from transmission_grid import build_grid


@pytest.fixture(autouse=True)
def lab_env(tmp_path, monkeypatch):
    """Logs and executor settings isolated per test."""
    monkeypatch.setenv("PLATE_LAB_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("PLATE_LAB_EXECUTOR", "threads")
    monkeypatch.setenv("PLATE_LAB_WORKERS", "2")
    services.environment = None
    services.clear_cache()
    yield
    services.environment = None
    services.clear_cache()


@pytest.fixture
def damped_model():
    return make_model({})


@pytest.fixture
def undamped_model():
    return make_model({"damping": {"shape": "none"}})


@pytest.fixture
def damped_generator(damped_model):
    grid = build_grid(damped_model, 200)
    return assemble_generator(damped_model, grid, seed=1)


@pytest.fixture
def undamped_generator(undamped_model):
    grid = build_grid(undamped_model, 200)
    return assemble_generator(undamped_model, grid, seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def eager_celery():
    from celery_app import celery
    previous = celery.conf.task_always_eager
    celery.conf.task_always_eager = True
    yield celery
    celery.conf.task_always_eager = previous
