"""
Time evolution U' = 𝒜_hU with the Cayley (trapezoidal) map, energy ledger and decay fits.

Main components:
    - InitialData: nodal samples, a single undamped mode, or smooth-k random data
    - CayleyStepper: (I - dt/2·T)⁻¹(I + dt/2·T) with one factorization per (generator, dt)
    - step / simulate: one step, or a full run recorded as an EnergyTrace
    - fit_decay: log-law vs exponential fits over the tail of a trace
    - mode_decay_rates: parallel mode sweep for the frequency–decay relation

Stepping happens in energy coordinates (see plate_generator), where the energy is
½‖Y‖² and the per-step loss is dt·q̄ᵀD̃q̄ with q̄ the midpoint velocity, so the
energy identity holds to round-off.
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

import numpy as np
import pandas as pd
from scipy.sparse import identity
from scipy.sparse.linalg import splu
from tqdm import tqdm

from lab_errors import DegenerateTraceError, FactorizationError, LabValidationError, LayoutError
from plate_generator import DiscreteGenerator, StateVector

logger = logging.getLogger(__name__)

MONOTONE_RTOL = 1e-10
IDENTITY_TOL = 1e-6
ENERGY_FLOOR = 1e-300
MIN_FIT_TIME = 50.0
STEPPER_CACHE_SIZE = 4


@dataclass
class InitialData:
    """
    kind="nodal":  u, v given as full nodal arrays
    kind="mode":   u = k-th undamped mode (M_c-normalized), v = 0
    kind="smooth": random combination of the lowest k undamped modes (seeded)
    """
    kind: str = "mode"
    k: int = 1
    u: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    seed: int = 0

    def resolve(self, gen: DiscreteGenerator) -> StateVector:
        if self.kind == "nodal":
            if self.u is None or self.v is None:
                raise LayoutError("nodal initial data needs both u and v")
            return StateVector.from_nodal(gen.grid, self.u, self.v)
        if self.k < 1 or self.k > gen.n:
            raise LabValidationError(f"initial.k: must be in [1, {gen.n}], got {self.k}")
        values, vectors = gen.undamped_modes(self.k)
        if self.kind == "mode":
            return StateVector(vectors[:, self.k - 1].copy(), np.zeros(gen.n))
        if self.kind == "smooth":
            rng = np.random.default_rng(self.seed)
            a = rng.standard_normal(self.k)
            b = rng.standard_normal(self.k)
            # each mode gets unit energy in u and v on average
            return StateVector(vectors @ (a / values), vectors @ b)
        raise LabValidationError(f"initial.kind: expected nodal, mode or smooth, got {self.kind!r}")


class CayleyStepper:
    def __init__(self, gen: DiscreteGenerator, dt: float):
        if dt <= 0:
            raise LabValidationError(f"numerics.dt: must be > 0, got {dt}")
        self.gen = gen
        self.dt = dt
        self._explicit = (identity(gen.dim, format="csr") + 0.5 * dt * gen.T).tocsr()
        try:
            self._lu = splu((identity(gen.dim, format="csc") - 0.5 * dt * gen.T).tocsc())
        except RuntimeError as e:
            raise FactorizationError(
                f"I - dt/2·T is singular for dt={dt}: {e}", details={"dt": dt, "dim": gen.dim}
            )

    def advance(self, y: np.ndarray) -> np.ndarray:
        return self._lu.solve(self._explicit @ y)

    def step_loss(self, y_old: np.ndarray, y_new: np.ndarray) -> float:
        """Energy dissipated over one step, dt·q̄ᵀD̃q̄."""
        q_mid = 0.5 * (y_old[self.gen.n:] + y_new[self.gen.n:])
        return float(self.dt * np.vdot(q_mid, self.gen.D_sym @ q_mid).real)


def stepper_for(gen: DiscreteGenerator, dt: float) -> CayleyStepper:
    """Factorized Cayley map for dt; the last STEPPER_CACHE_SIZE step sizes stay cached per generator."""
    with gen.cache_lock:
        stepper = gen.stepper_cache.get(dt)
        if stepper is not None:
            gen.stepper_cache.move_to_end(dt)
            return stepper
        stepper = CayleyStepper(gen, dt)
        gen.stepper_cache[dt] = stepper
        while len(gen.stepper_cache) > STEPPER_CACHE_SIZE:
            evicted, _ = gen.stepper_cache.popitem(last=False)
            logger.debug(f"[SOLVE] evicted Cayley map dt={evicted}")
        logger.debug(f"[SOLVE] factorized Cayley map dt={dt}")
    return stepper


def step(gen: DiscreteGenerator, state: StateVector, dt: float) -> StateVector:
    stepper = stepper_for(gen, dt)
    return gen.from_energy_coords(stepper.advance(gen.to_energy_coords(state)))


@dataclass
class EnergyTrace:
    t: np.ndarray
    energy: np.ndarray
    cumulative_dissipation: np.ndarray
    dt: float
    scheme: str = "cayley"
    final_state: Optional[StateVector] = field(default=None, repr=False)

    @property
    def identity_residual(self) -> np.ndarray:
        e0 = self.energy[0]
        if e0 == 0.0:
            return np.zeros_like(self.energy)
        return np.abs(self.energy - e0 + self.cumulative_dissipation) / e0

    def is_monotone(self, rtol: float = MONOTONE_RTOL) -> bool:
        return bool(np.all(np.diff(self.energy) <= rtol * self.energy[0]))

    def check_invariants(self, tol_identity: float = IDENTITY_TOL) -> Dict[str, object]:
        worst = float(self.identity_residual.max()) if len(self.energy) else 0.0
        return {
            "monotone": self.is_monotone(),
            "max_identity_residual": worst,
            "identity_ok": worst <= tol_identity,
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": self.t,
            "energy": self.energy,
            "cumulative_dissipation": self.cumulative_dissipation,
            "identity_residual": self.identity_residual,
        })

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "EnergyTrace":
        t = frame["t"].to_numpy(dtype=float)
        dt = float(t[1] - t[0]) if len(t) > 1 else 0.0
        return cls(t=t, energy=frame["energy"].to_numpy(dtype=float),
                   cumulative_dissipation=frame["cumulative_dissipation"].to_numpy(dtype=float), dt=dt)


def simulate(gen: DiscreteGenerator, init: InitialData, T: float, dt: float,
             record_every: int = 1, progress: bool = False) -> EnergyTrace:
    """
    Run the Cayley scheme to time T and record (t, E, cumulative dissipation).

    Args:
        gen: assembled generator.
        init: initial data recipe.
        T: final time (> 0).
        dt: step size, dt ≤ T. The step count is round(T/dt); a warning is logged
            when T is not a whole number of steps.
        record_every: keep every n-th step in the trace (the final step is always kept).
        progress: show a tqdm bar.

    Returns:
        EnergyTrace with the final state attached.
    """
    if T <= 0:
        raise LabValidationError(f"numerics.T: must be > 0, got {T}")
    if not 0 < dt <= T:
        raise LabValidationError(f"numerics.dt: must be in (0, T], got {dt}")
    n_steps = max(1, int(round(T / dt)))
    if abs(T / dt - n_steps) > 1e-9 * max(1.0, T / dt):
        logger.warning(
            f"[WARN] simulate: T={T:g} is not a multiple of dt={dt:g}; final time is {n_steps * dt:g}"
        )
    stepper = stepper_for(gen, dt)
    y = gen.to_energy_coords(init.resolve(gen))

    times = [0.0]
    energies = [0.5 * float(np.dot(y, y))]
    losses = [0.0]
    cumulative = 0.0
    for n in tqdm(range(1, n_steps + 1), disable=not progress, desc="simulate", leave=False):
        y_new = stepper.advance(y)
        cumulative += stepper.step_loss(y, y_new)
        y = y_new
        if n % record_every == 0 or n == n_steps:
            times.append(n * dt)
            energies.append(0.5 * float(np.dot(y, y)))
            losses.append(cumulative)

    trace = EnergyTrace(
        t=np.asarray(times), energy=np.asarray(energies),
        cumulative_dissipation=np.asarray(losses), dt=dt,
        final_state=gen.from_energy_coords(y),
    )
    logger.info(
        f"[OK] simulate: {n_steps} steps, E(0)={trace.energy[0]:.6g}, "
        f"E(T)={trace.energy[-1]:.6g}, identity residual={trace.identity_residual.max():.2e}"
    )
    return trace


@dataclass
class DecayFit:
    k: int
    C_fit: float
    residual: float
    exp_rate: float
    exp_prefactor: float
    exp_residual: float
    free_kappa: float
    free_C: float
    free_residual: float

    @property
    def preferred(self) -> str:
        return "exponential" if self.exp_residual < self.residual else "log-law"

    def to_dict(self) -> Dict[str, object]:
        return {**self.__dict__, "preferred": self.preferred}


def _rms(values: np.ndarray) -> float:
    return float(np.sqrt(np.mean(values ** 2)))


def exponential_fit(t: np.ndarray, log_e: np.ndarray):
    """Least-squares log E = log P - rate·t; returns (rate, P, rms residual)."""
    design = np.column_stack([np.ones_like(t), t])
    coef, *_ = np.linalg.lstsq(design, log_e, rcond=None)
    return float(-coef[1]), float(np.exp(coef[0])), _rms(log_e - design @ coef)


def fit_decay(trace: EnergyTrace, k: int, min_time: float = MIN_FIT_TIME) -> DecayFit:
    """
    Fit E(t) ≈ C/(ln(2+t))^{2k} over the tail half of the trace, plus competitors.

    The log-law slope is fixed at -2k so C is the mean of log E + 2k·ln ln(2+t);
    the free-exponent variant fits the exponent as well (E ≈ C/(ln(2+t))^{2κ}).
    On a fixed grid the exponential fit normally wins.

    Raises:
        DegenerateTraceError: trace too short, k < 1, or energies below 1e-300.
    """
    if k < 1:
        raise LabValidationError(f"fit_decay: k must be >= 1, got {k}")
    if len(trace.t) < 4 or trace.t[-1] < min_time:
        raise DegenerateTraceError(f"fit_decay: trace must reach t >= {min_time}, ends at {trace.t[-1]:g}")
    tail = trace.t >= 0.5 * trace.t[-1]
    t = trace.t[tail]
    e = trace.energy[tail]
    if np.any(e < ENERGY_FLOOR):
        raise DegenerateTraceError("fit_decay: energy below 1e-300 in the fitted tail")
    log_e = np.log(e)
    loglog = np.log(np.log(2.0 + t))

    log_c = float(np.mean(log_e + 2 * k * loglog))
    residual = _rms(log_e - (log_c - 2 * k * loglog))

    exp_rate, exp_prefactor, exp_residual = exponential_fit(t, log_e)

    design = np.column_stack([np.ones_like(t), -2.0 * loglog])
    coef, *_ = np.linalg.lstsq(design, log_e, rcond=None)
    free_residual = _rms(log_e - design @ coef)

    return DecayFit(
        k=k, C_fit=float(np.exp(log_c)), residual=residual,
        exp_rate=exp_rate, exp_prefactor=exp_prefactor, exp_residual=exp_residual,
        free_kappa=float(coef[1]), free_C=float(np.exp(coef[0])), free_residual=free_residual,
    )


@dataclass
class ModeDecay:
    mode: int
    rate: float
    residual: float
    final_energy: float


def mode_decay(gen: DiscreteGenerator, mode: int, T: float, dt: float) -> ModeDecay:
    """Late-time exponential energy rate of the run started from undamped mode `mode`."""
    trace = simulate(gen, InitialData(kind="mode", k=mode), T, dt)
    tail = (trace.t >= 0.5 * trace.t[-1]) & (trace.energy > ENERGY_FLOOR)
    if tail.sum() < 2:
        raise DegenerateTraceError(f"mode {mode}: energy vanished before the fit window")
    rate, _, residual = exponential_fit(trace.t[tail], np.log(trace.energy[tail]))
    return ModeDecay(mode=mode, rate=rate, residual=residual, final_energy=float(trace.energy[-1]))


def mode_decay_rates(gen: DiscreteGenerator, modes: Iterable[int], T: float, dt: float,
                     workers: Optional[int] = None) -> List[ModeDecay]:
    """Run one simulation per mode in a thread pool; results ordered as `modes`."""
    modes = list(modes)
    workers = workers or int(os.getenv("PLATE_LAB_WORKERS", "4"))
    # factorize once before fanning out
    stepper_for(gen, dt)
    results: Dict[int, ModeDecay] = {}
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(mode_decay, gen, k, T, dt): k for k in modes}
        for future in tqdm(as_completed(futures), total=len(futures), desc="modes", leave=False):
            k = futures[future]
            results[k] = future.result()
            logger.info(f"[OK] mode {k}: rate={results[k].rate:.6g}")
    return [results[k] for k in modes]


def is_decay_monotone(rates: List[float], skip: int = 1, rtol: float = 0.05) -> bool:
    """Rates nonincreasing (within rtol) after the first `skip` entries."""
    tail = list(rates)[skip:]
    return all(later <= earlier * (1.0 + rtol) for earlier, later in zip(tail, tail[1:]))
