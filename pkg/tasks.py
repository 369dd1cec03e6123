"""
Celery tasks for distributed sweeps.

Resolvent sweep points and mode-decay runs are independent; with
PLATE_LAB_EXECUTOR=celery the CLI dispatches them here instead of to the local
thread pool. Workers rebuild the generator from the config dict through the
per-process cache in services.
"""
import logging
from dataclasses import dataclass, asdict
from datetime import datetime
from typing import List, Sequence

from celery_app import celery
from energy_evolution import ModeDecay, mode_decay
from lab_settings import RunConfig
from services import get_generator, init_services
from spectral_analysis import ResolventSample, point_seed, resolvent_norm

logger = logging.getLogger(__name__)


@dataclass
class TaskStatus:
    """A serializable status for one work item."""
    item: str
    status: str  # 'PROGRESS', 'SUCCESS', 'FAILURE'
    progress: int
    message: str
    timestamp: str


class SweepProcessor:
    """
    Runs one work item of a sweep and reports progress back to the Celery task.
    """

    def __init__(self, celery_task, config: RunConfig):
        self.celery_task = celery_task
        self.config = config

    def resolvent_point(self, index: int, mu: float) -> dict:
        item = f"resolvent[{index}]"
        try:
            self._update_status(item, 'PROGRESS', 10, 'assembling generator')
            _, _, gen = get_generator(self.config)
            self._update_status(item, 'PROGRESS', 40, f'factorizing at mu={mu:g}')
            sample = resolvent_norm(gen, mu, seed=point_seed(self.config.seeds()["resolvent"], index))
            status = self._update_status(item, 'SUCCESS', 100, f'norm={sample.norm:.6g}')
            return {**asdict(status), "index": index, "sample": sample.to_dict()}
        except Exception as e:
            logger.error(f"[ERROR] {item} at mu={mu:g} failed: {e}", exc_info=True)
            status = self._update_status(item, 'FAILURE', 0, f'{type(e).__name__}: {e}')
            return {**asdict(status), "index": index, "sample": None}

    def mode_run(self, mode: int) -> dict:
        item = f"mode[{mode}]"
        try:
            self._update_status(item, 'PROGRESS', 10, 'assembling generator')
            _, _, gen = get_generator(self.config)
            self._update_status(item, 'PROGRESS', 30, 'time stepping')
            result = mode_decay(gen, mode, self.config.numerics.T, self.config.numerics.dt)
            status = self._update_status(item, 'SUCCESS', 100, f'rate={result.rate:.6g}')
            return {**asdict(status), "mode": mode, "decay": asdict(result)}
        except Exception as e:
            logger.error(f"[ERROR] {item} failed: {e}", exc_info=True)
            status = self._update_status(item, 'FAILURE', 0, f'{type(e).__name__}: {e}')
            return {**asdict(status), "mode": mode, "decay": None}

    def _update_status(self, item: str, status: str, progress: int, message: str) -> TaskStatus:
        status_obj = TaskStatus(item=item, status=status, progress=progress, message=message,
                                timestamp=datetime.now().isoformat())
        # eager runs have no result backend to report to
        if not getattr(self.celery_task.request, 'is_eager', False):
            self.celery_task.update_state(state='PROGRESS', meta=asdict(status_obj))
        return status_obj


@celery.task(bind=True)
def resolvent_point_task(self, config_data: dict, index: int, mu: float):
    """‖(𝒜_h - iμ)⁻¹‖ for one sweep point; returns a status dict with the sample."""
    init_services()
    logger.info(f"[TASK] resolvent point {index} at mu={mu:g}")
    processor = SweepProcessor(celery_task=self, config=RunConfig.from_dict(config_data))
    return processor.resolvent_point(index, mu)


@celery.task(bind=True)
def mode_decay_task(self, config_data: dict, mode: int):
    """Late-time decay rate of one undamped mode; returns a status dict with the fit."""
    init_services()
    logger.info(f"[TASK] mode decay run for mode {mode}")
    processor = SweepProcessor(celery_task=self, config=RunConfig.from_dict(config_data))
    return processor.mode_run(mode)


class TaskFailedError(RuntimeError):
    pass


def dispatch_resolvent_sweep(config: RunConfig, mu_grid: Sequence[float]) -> List[ResolventSample]:
    """Submit every point, wait, and return the samples in input order."""
    data = config.to_dict()
    pending = [resolvent_point_task.delay(data, i, float(mu)) for i, mu in enumerate(mu_grid)]
    samples: List[ResolventSample] = []
    for result in pending:
        payload = result.get()
        if payload["sample"] is None:
            raise TaskFailedError(f"{payload['item']}: {payload['message']}")
        fields = {k: v for k, v in payload["sample"].items() if k != "log_norm"}
        samples.append(ResolventSample(**fields))
    logger.info(f"[OK] {len(samples)} resolvent points collected from workers")
    return samples


def dispatch_mode_decay(config: RunConfig, modes: Sequence[int]) -> List[ModeDecay]:
    data = config.to_dict()
    pending = [mode_decay_task.delay(data, int(k)) for k in modes]
    results: List[ModeDecay] = []
    for result in pending:
        payload = result.get()
        if payload["decay"] is None:
            raise TaskFailedError(f"{payload['item']}: {payload['message']}")
        results.append(ModeDecay(**payload["decay"]))
    return results
