"""
Per-process shared state: assembled generators keyed by their configuration.

CLI runs, thread pools and Celery workers all go through get_generator(), so
each process assembles (and verifies) a given model/grid pair once.
"""
import logging
import threading
from typing import Dict, Optional, Tuple

from lab_settings import LabEnvironment, RunConfig
from plate_generator import DiscreteGenerator, assemble_generator
from plate_model import TransmissionModel1D
from transmission_grid import Grid1D, build_grid

logger = logging.getLogger(__name__)

# Global state, initialized lazily once per process
environment: Optional[LabEnvironment] = None
_generators: Dict[str, Tuple[TransmissionModel1D, Grid1D, DiscreteGenerator]] = {}
_lock = threading.Lock()


def init_services() -> LabEnvironment:
    """Read the environment settings once per process (CLI, Celery worker)."""
    global environment
    if environment is None:
        environment = LabEnvironment.from_env()
        logger.info(f"[OK] services initialized: executor={environment.executor}, workers={environment.workers}")
    return environment


def get_generator(config: RunConfig) -> Tuple[TransmissionModel1D, Grid1D, DiscreteGenerator]:
    """Model, grid and verified generator for `config`, assembled on first use."""
    key = config.cache_key()
    with _lock:
        cached = _generators.get(key)
        if cached is not None:
            logger.debug("[CACHE] generator hit")
            return cached
        model = config.build_model()
        grid = build_grid(model, config.numerics.n_cells)
        gen = assemble_generator(model, grid, seed=config.seeds()["generator"])
        _generators[key] = (model, grid, gen)
        logger.info(f"[CACHE] generator assembled for n_cells={grid.n_cells} ({len(_generators)} cached)")
        return _generators[key]


def clear_cache() -> None:
    with _lock:
        _generators.clear()
