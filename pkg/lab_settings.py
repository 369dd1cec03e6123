"""
Run configuration for the plate lab.

Scientific settings come from a JSON file parsed into nested dataclass sections;
infrastructure settings (executor, workers, logging, broker) come from the
environment via python-dotenv.
"""
import json
import logging
import os
from dataclasses import dataclass, field, fields, asdict, is_dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import numpy as np
from dotenv import load_dotenv

from lab_errors import LabValidationError
from plate_model import AnnularDomain2D, TransmissionModel1D, make_model
from transmission_grid import MIN_CELLS

load_dotenv()

logger = logging.getLogger(__name__)

SEED_STREAMS = ("generator", "initial", "resolvent", "weights", "forcing")


@dataclass
class DampingSection:
    m: float = 0.5
    w: float = 0.1
    a_max: float = 1.0
    shape: str = "smooth-bump"


@dataclass
class ModelSection:
    L: float = 1.0
    a_if: float = 0.3
    b_if: float = 0.7
    c1: float = 1.0
    c2: float = 1.0
    damping: DampingSection = field(default_factory=DampingSection)


@dataclass
class NumericsSection:
    n_cells: int = 200
    dt: float = 0.01
    T: float = 50.0
    record_every: int = 10
    initial_kind: str = "smooth"
    initial_k: int = 4
    decay_k: int = 1
    modes: List[int] = field(default_factory=lambda: [1, 4, 8, 12])


@dataclass
class SweepSection:
    mu_min: float = 5.0
    mu_max: float = 400.0
    points: int = 100
    reduction_mu: float = 10.0


@dataclass
class CarlemanSection:
    h_sweep: List[float] = field(default_factory=lambda: [0.1, 0.05, 0.025, 0.0125])
    kappa1: float = 2.0
    kappa2: float = 1.0
    lam: float = 1.0
    h0: float = 0.2
    ball_radius: Optional[float] = None
    quadrature_points: int = 4001
    mode: int = 1
    check_gamma1: bool = True


@dataclass
class WeightsSection:
    hole_x: float = 0.3
    hole_y: float = 0.0
    hole_r: float = 0.2
    outer_radius: float = 1.0
    arc_length: float = 0.08
    taper: float = 0.08
    flow_steps: int = 64
    n_side: int = 120
    lambda0: float = 1.0
    lambda_cap: float = 1024.0
    # None: one automatic dip for an off-centre hole; []: bare radial field
    dips: Optional[List[Dict[str, Any]]] = None


@dataclass
class OutputSection:
    dir: str = "results"
    trace: str = "trace.csv"
    spectrum: str = "spectrum.csv"
    sweep: str = "sweep.csv"
    ratio: str = "ratio.csv"
    decay: str = "decay.csv"
    reduction: str = "reduction.json"
    weights: str = "weights.json"
    summary: str = "summary.json"
    diagnostic: str = "diagnostic.json"

    def path(self, name: str) -> Path:
        return Path(self.dir) / getattr(self, name)


@dataclass
class RunConfig:
    seed: int = 0
    model: ModelSection = field(default_factory=ModelSection)
    numerics: NumericsSection = field(default_factory=NumericsSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    carleman: CarlemanSection = field(default_factory=CarlemanSection)
    weights: WeightsSection = field(default_factory=WeightsSection)
    output: OutputSection = field(default_factory=OutputSection)

    @classmethod
    def from_dict(cls, data: Optional[Mapping[str, Any]]) -> "RunConfig":
        """Parse and validate; unknown keys are rejected with their dotted path."""
        config = _parse_section(cls, data or {}, "")
        config.validate()
        return config

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def build_model(self) -> TransmissionModel1D:
        return make_model(asdict(self.model))

    def build_domain(self) -> AnnularDomain2D:
        w = self.weights
        return AnnularDomain2D(outer_radius=w.outer_radius, hole_center=(w.hole_x, w.hole_y),
                               hole_radius=w.hole_r)

    def seeds(self) -> Dict[str, int]:
        """One child seed per random stream, all spawned from `seed`."""
        children = np.random.SeedSequence(self.seed).spawn(len(SEED_STREAMS))
        return {name: int(child.generate_state(1)[0]) for name, child in zip(SEED_STREAMS, children)}

    def cache_key(self) -> str:
        """Identity of the assembled generator: model + grid size + seed."""
        return json.dumps({"model": asdict(self.model), "n_cells": self.numerics.n_cells,
                           "seed": self.seed}, sort_keys=True)

    def validate(self) -> None:
        """
        Raises:
            LabValidationError: the first invalid field, named by its dotted path.
        """
        if not isinstance(self.seed, int) or self.seed < 0 or self.seed >= 2 ** 64:
            raise LabValidationError(f"seed: expected a 64-bit nonnegative integer, got {self.seed!r}")
        self.build_model()

        n = self.numerics
        if not isinstance(n.n_cells, int) or n.n_cells < MIN_CELLS:
            raise LabValidationError(f"numerics.n_cells: must be an integer >= {MIN_CELLS}, got {n.n_cells!r}")
        if n.T <= 0:
            raise LabValidationError(f"numerics.T: must be > 0, got {n.T}")
        if not 0 < n.dt <= n.T:
            raise LabValidationError(f"numerics.dt: must be in (0, T], got {n.dt}")
        if n.record_every < 1:
            raise LabValidationError("numerics.record_every: must be >= 1")
        if n.initial_kind not in ("mode", "smooth"):
            raise LabValidationError(f"numerics.initial_kind: expected mode or smooth, got {n.initial_kind!r}")
        if n.initial_k < 1 or n.decay_k < 1:
            raise LabValidationError("numerics.initial_k/decay_k: must be >= 1")
        if not n.modes or any(int(k) < 1 for k in n.modes):
            raise LabValidationError("numerics.modes: need a nonempty list of positive mode indices")

        s = self.sweep
        if s.points < 1:
            raise LabValidationError("sweep.points: must be >= 1")
        if s.mu_min <= 0 or (s.points > 1 and s.mu_max <= s.mu_min):
            raise LabValidationError(f"sweep: need 0 < mu_min < mu_max, got {s.mu_min}, {s.mu_max}")

        c = self.carleman
        if not c.h_sweep or any(not 0 < h <= c.h0 for h in c.h_sweep):
            raise LabValidationError(f"carleman.h_sweep: every h must lie in (0, {c.h0}]")
        if not c.kappa1 > c.kappa2 > 0 or c.lam <= 0:
            raise LabValidationError("carleman: need kappa1 > kappa2 > 0 and lam > 0")
        if c.quadrature_points < 5 or c.quadrature_points % 2 == 0:
            raise LabValidationError("carleman.quadrature_points: must be odd and >= 5")

        wt = self.weights
        self.build_domain()
        if wt.arc_length <= 0 or wt.taper <= 0 or wt.flow_steps < 1:
            raise LabValidationError("weights: arc_length, taper and flow_steps must be positive")
        if wt.lambda0 <= 0 or wt.lambda_cap < wt.lambda0:
            raise LabValidationError("weights: need 0 < lambda0 <= lambda_cap")
        if wt.n_side < 10:
            raise LabValidationError("weights.n_side: must be >= 10")


def _parse_section(cls, data: Mapping[str, Any], prefix: str):
    if not isinstance(data, Mapping):
        raise LabValidationError(f"{prefix.rstrip('.') or 'config'}: expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise LabValidationError(f"{prefix}{unknown[0]}: unknown key")
    defaults = cls()
    values = {}
    for name, f in known.items():
        if name not in data:
            continue
        default = getattr(defaults, name)
        if is_dataclass(default):
            values[name] = _parse_section(type(default), data[name], f"{prefix}{name}.")
        else:
            values[name] = _coerce(data[name], default, f"{prefix}{name}")
    return cls(**values)


def _coerce(value: Any, default: Any, path: str) -> Any:
    """Coerce a JSON value to the type of the default; None stays None for optional fields."""
    if default is None or value is None:
        return value
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if isinstance(default, str):
            return str(value)
        if isinstance(default, list):
            if not isinstance(value, list):
                raise TypeError
            sample = default[0] if default else None
            return [_coerce(v, sample, f"{path}[{i}]") for i, v in enumerate(value)]
    except (TypeError, ValueError):
        raise LabValidationError(f"{path}: expected {type(default).__name__}, got {value!r}")
    return value


def load_config(path: Optional[Union[str, Path]]) -> RunConfig:
    """Read a JSON run configuration; None gives the defaults."""
    if path is None:
        return RunConfig.from_dict({})
    path = Path(path)
    if not path.exists():
        raise LabValidationError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise LabValidationError(f"config file {path}: invalid JSON ({e})")
    logger.info(f"[OK] config loaded from {path}")
    return RunConfig.from_dict(data)


@dataclass
class LabEnvironment:
    """Infrastructure settings from the environment (.env honoured)."""
    executor: str = "threads"
    workers: int = 4
    log_dir: str = "logs"
    log_level: str = "INFO"
    redis_url: str = "redis://localhost:6379/0"
    always_eager: bool = False

    @classmethod
    def from_env(cls) -> "LabEnvironment":
        executor = os.getenv("PLATE_LAB_EXECUTOR", "threads").strip().lower()
        if executor not in ("threads", "celery"):
            raise LabValidationError(f"PLATE_LAB_EXECUTOR: expected threads or celery, got {executor!r}")
        try:
            workers = int(os.getenv("PLATE_LAB_WORKERS", "4"))
        except ValueError:
            raise LabValidationError("PLATE_LAB_WORKERS: expected an integer")
        if workers < 1:
            raise LabValidationError("PLATE_LAB_WORKERS: must be >= 1")
        return cls(
            executor=executor,
            workers=workers,
            log_dir=os.getenv("PLATE_LAB_LOG_DIR", "logs"),
            log_level=os.getenv("PLATE_LAB_LOG_LEVEL", "INFO").upper(),
            redis_url=os.getenv("REDIS_URL", "redis://localhost:6379/0"),
            always_eager=os.getenv("CELERY_TASK_ALWAYS_EAGER", "false").lower() in ("1", "true", "yes"),
        )
