"""
Spectrum and resolvent of the discrete generator along the imaginary axis.

Main components:
    - spectrum: dense eigen-solve (Hermitian path when a ≡ 0)
    - resolvent_norm: ‖(𝒜_h - iμ)⁻¹‖ in the energy norm by inverse iteration
    - resolvent_sweep: parallel map over μ plus the upper envelope fit
    - fit_envelope: smallest line C_a + C_b|μ| above every log-norm sample (LP)

All computations use the energy-symmetrized generator T, whose Euclidean
operator norm is the energy norm of 𝒜_h.
"""
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, asdict
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.sparse.linalg import LinearOperator, eigsh, splu
from scipy.sparse.linalg import norm as sparse_norm
from tqdm import tqdm

from lab_errors import LabValidationError, SpectralError
from plate_generator import DiscreteGenerator

logger = logging.getLogger(__name__)

MAX_DENSE_DIM = 4000
REAL_PART_TOL = 1e-10
RESIDUAL_TOL = 1e-8
SINGULAR_RTOL = 1e-12
POWER_MAX_ITER = 300


def spectrum(gen: DiscreteGenerator) -> np.ndarray:
    """
    All eigenvalues of 𝒜_h, sorted by imaginary part.

    Raises:
        LabValidationError: dimension above MAX_DENSE_DIM.
        SpectralError: the dense eigensolver did not converge.
    """
    if gen.dim > MAX_DENSE_DIM:
        raise LabValidationError(f"spectrum: dimension {gen.dim} exceeds dense limit {MAX_DENSE_DIM}")
    dense = gen.T.toarray()
    try:
        if gen.is_damped:
            values = scipy.linalg.eigvals(dense)
        else:
            # iT is Hermitian for skew T; its real eigenvalues ω give s = -iω
            values = -1j * scipy.linalg.eigvalsh(1j * dense)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise SpectralError(f"eigensolver failed: {e}", details={"dim": gen.dim})
    values = values[np.argsort(values.imag, kind="stable")]

    max_real = float(values.real.max())
    if max_real > REAL_PART_TOL:
        logger.warning(f"[WARN] spectrum: max real part {max_real:.3e} above {REAL_PART_TOL:.0e}")
    logger.info(f"[OK] spectrum: {len(values)} eigenvalues, max Re={max_real:.3e}")
    return values


def spectral_abscissa(values: np.ndarray) -> float:
    return float(values.real.max())


def distance_to_spectrum(values: np.ndarray, mu: float) -> float:
    return float(np.min(np.abs(values - 1j * mu)))


@dataclass
class ResolventSample:
    mu: float
    norm: float
    iterations: int
    residual: float
    method: str = "inverse-iteration"

    @property
    def log_norm(self) -> float:
        return math.log(self.norm) if math.isfinite(self.norm) else math.inf

    @property
    def is_singular(self) -> bool:
        return not math.isfinite(self.norm)

    def to_dict(self) -> Dict[str, object]:
        return {**asdict(self), "log_norm": self.log_norm}


def _singular_sample(mu: float, reason: str) -> ResolventSample:
    logger.warning(f"[WARN] resolvent at mu={mu:g} is singular ({reason}); reporting inf")
    return ResolventSample(mu=mu, norm=math.inf, iterations=0, residual=0.0, method="singular")


def resolvent_norm(gen: DiscreteGenerator, mu: float, seed: int = 0,
                   max_iter: int = POWER_MAX_ITER, tol: float = RESIDUAL_TOL) -> ResolventSample:
    """
    ‖(𝒜_h - iμ)⁻¹‖ in the energy norm, i.e. 1/σ_min(T - iμ).

    Power iteration on RᴴR with R = (T - iμ)⁻¹, both applications reusing one
    LU factorization. Falls back to ARPACK (eigsh) when the two leading
    singular values are too close for power iteration to settle.
    """
    shifted = (gen.T.astype(complex) - 1j * mu * sp.identity(gen.dim, format="csc")).tocsc()
    try:
        lu = splu(shifted)
    except RuntimeError as e:
        return _singular_sample(mu, str(e))

    def gram(x: np.ndarray) -> np.ndarray:
        return lu.solve(lu.solve(x), trans="H")

    rng = np.random.default_rng(seed)
    x = rng.standard_normal(gen.dim) + 1j * rng.standard_normal(gen.dim)
    x /= np.linalg.norm(x)
    theta = 0.0
    residual = math.inf
    iterations = 0
    method = "inverse-iteration"
    for iterations in range(1, max_iter + 1):
        z = gram(x)
        theta = float(np.vdot(x, z).real)
        if not np.isfinite(theta) or theta <= 0:
            return _singular_sample(mu, "non-finite Rayleigh quotient")
        residual = float(np.linalg.norm(z - theta * x) / theta)
        x = z / np.linalg.norm(z)
        if residual <= tol:
            break
    else:
        op = LinearOperator((gen.dim, gen.dim), matvec=gram, dtype=complex)
        try:
            values, vectors = eigsh(op, k=1, which="LM", v0=x, tol=1e-13, maxiter=20 * gen.dim)
        except Exception as e:
            raise SpectralError(f"resolvent at mu={mu:g} did not converge: {e}",
                                details={"mu": mu, "residual": residual})
        theta = float(values[0])
        vec = vectors[:, 0] / np.linalg.norm(vectors[:, 0])
        residual = float(np.linalg.norm(gram(vec) - theta * vec) / theta)
        method = "arpack"

    norm = math.sqrt(theta)
    scale = sparse_norm(gen.T, 1) + abs(mu)
    if 1.0 / norm < SINGULAR_RTOL * scale:
        return _singular_sample(mu, f"sigma_min={1.0 / norm:.3e}")
    return ResolventSample(mu=float(mu), norm=norm, iterations=iterations, residual=residual, method=method)


@dataclass
class Envelope:
    C_a: float
    C_b: float
    samples_used: int

    def bound(self, mu: float) -> float:
        return self.C_a + self.C_b * abs(mu)


def fit_envelope(samples: Sequence[ResolventSample]) -> Optional[Envelope]:
    """
    Smallest upper line log‖R(iμ)‖ ≤ C_a + C_b|μ| with C_b ≥ 0.

    Minimizes the summed envelope height over the finite samples subject to
    every sample lying below it; a 1e-9 tie-breaker prefers the flatter line.
    Returns None when every sample is singular.
    """
    finite = [s for s in samples if not s.is_singular]
    if not finite:
        return None
    abs_mu = np.array([abs(s.mu) for s in finite])
    log_norm = np.array([s.log_norm for s in finite])
    cost = np.array([len(finite), abs_mu.sum() + 1e-9])
    a_ub = -np.column_stack([np.ones_like(abs_mu), abs_mu])
    result = linprog(cost, A_ub=a_ub, b_ub=-log_norm, bounds=[(None, None), (0, None)], method="highs")
    if not result.success:
        raise SpectralError(f"envelope LP failed: {result.message}")
    c_a, c_b = (float(v) for v in result.x)
    # lift by the worst violation left by the LP tolerance
    slack = float(np.max(log_norm - (c_a + c_b * abs_mu)))
    if slack > 0:
        c_a += slack
    return Envelope(C_a=c_a, C_b=c_b, samples_used=len(finite))


@dataclass
class SweepResult:
    samples: List[ResolventSample]
    envelope: Optional[Envelope]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([
            {"mu": s.mu, "norm": s.norm, "log_norm": s.log_norm,
             "iterations": s.iterations, "residual": s.residual}
            for s in self.samples
        ])


def resolvent_sweep(gen: DiscreteGenerator, mu_grid: Sequence[float], seed: int = 0,
                    workers: Optional[int] = None, progress: bool = False) -> SweepResult:
    """
    Resolvent norms over mu_grid in a thread pool, plus the envelope fit.

    Each point owns its factorization and a start vector seeded by (seed, index),
    so the output does not depend on scheduling.
    """
    mu_grid = [float(mu) for mu in mu_grid]
    workers = workers or int(os.getenv("PLATE_LAB_WORKERS", "4"))
    results: Dict[int, ResolventSample] = {}
    logger.info(f"[SWEEP] {len(mu_grid)} points, {workers} workers")
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {
            executor.submit(resolvent_norm, gen, mu, point_seed(seed, i)): i
            for i, mu in enumerate(mu_grid)
        }
        for future in tqdm(as_completed(futures), total=len(futures), desc="resolvent",
                           disable=not progress, leave=False):
            results[futures[future]] = future.result()
    samples = [results[i] for i in range(len(mu_grid))]
    envelope = fit_envelope(samples)
    if envelope is not None:
        logger.info(f"[OK] envelope C_a={envelope.C_a:.6g}, C_b={envelope.C_b:.6g}")
    return SweepResult(samples=samples, envelope=envelope)


def point_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def log_spaced_grid(mu_min: float, mu_max: float, points: int) -> np.ndarray:
    if points < 1:
        raise LabValidationError("sweep.points: must be >= 1")
    if points == 1:
        return np.array([mu_min])
    if mu_min <= 0 or mu_max <= mu_min:
        raise LabValidationError("sweep: need 0 < mu_min < mu_max for a log-spaced grid")
    return np.geomspace(mu_min, mu_max, points)
