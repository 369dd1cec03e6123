"""
Second-order reduction of the stationary problem (𝒜_h - iμ)U = F.

Given F = (f, g), solve for U = (u, v), set v = iμu + f and

    w = -G_h u - |μ|u + (a/c₁)Δ_h v

(G_h ≈ -cΔ). Then w solves -Δw - (|μ|/c)w = Φ with

    Φ = (g + iμf)/c - |μ|(a/c₁²)Δ_h v,

continuity of w and ∂ₓw at a_if, b_if, and w = 0 at x = 0, L. The report measures
the equation residual on the nodes, the interface jumps from one-sided quadratic
reconstructions on each side, and the outer traces by quadratic extrapolation.
"""
import logging
import math
from dataclasses import dataclass, asdict
from typing import Dict, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from lab_errors import FactorizationError
from plate_generator import DiscreteGenerator, StateVector
from plate_model import TransmissionModel1D
from transmission_grid import Grid1D

logger = logging.getLogger(__name__)

# Lagrange weights for nodes at distance 1, 2, 3 cells from the evaluation point
_VALUE_WEIGHTS = np.array([3.0, -3.0, 1.0])
_SLOPE_WEIGHTS = np.array([-2.5, 4.0, -1.5])


@dataclass
class SmoothForcing:
    """f and g as finite sine series Σ c_j sin(jπx/L); f satisfies f = f'' = 0 at the ends."""
    f_coeffs: Sequence[float]
    g_coeffs: Sequence[float]

    @classmethod
    def random(cls, seed: int, terms: int = 4) -> "SmoothForcing":
        rng = np.random.default_rng(seed)
        decay = 1.0 / np.arange(1, terms + 1) ** 2
        return cls(list(rng.standard_normal(terms) * decay), list(rng.standard_normal(terms) * decay))

    @classmethod
    def zero(cls) -> "SmoothForcing":
        return cls([0.0], [0.0])

    @staticmethod
    def _series(coeffs: Sequence[float], x: np.ndarray, L: float) -> np.ndarray:
        return sum(c * np.sin((j + 1) * np.pi * x / L) for j, c in enumerate(coeffs))

    def sample(self, grid: Grid1D):
        x = grid.interior
        return self._series(self.f_coeffs, x, grid.L), self._series(self.g_coeffs, x, grid.L)


@dataclass
class ReductionReport:
    mu: float
    n_cells: int
    pde_residual: float
    value_jump: float
    flux_jump: float
    trace_residual: float
    data_norm: float
    key_lemma_lhs: float
    key_lemma_rhs: float

    @property
    def consistency_residual(self) -> float:
        return self.value_jump + self.flux_jump + self.trace_residual

    @property
    def key_lemma_ratio(self) -> float:
        return self.key_lemma_lhs / self.key_lemma_rhs if self.key_lemma_rhs > 0 else 0.0

    def to_dict(self) -> Dict[str, float]:
        return {
            **asdict(self),
            "consistency_residual": self.consistency_residual,
            "key_lemma_ratio": self.key_lemma_ratio,
        }


def _one_sided(values: np.ndarray, node: int, direction: int, h: float):
    """Value and x-derivative at `node` from the three nodes on one side."""
    idx = node + direction * np.arange(1, 4)
    samples = values[idx]
    value = _VALUE_WEIGHTS @ samples
    slope = direction * (_SLOPE_WEIGHTS @ samples) / h
    return value, slope


def solve_stationary(gen: DiscreteGenerator, mu: float, f: np.ndarray, g: np.ndarray) -> StateVector:
    shifted = (gen.A.astype(complex) - 1j * mu * sp.identity(gen.dim, format="csr")).tocsc()
    try:
        lu = splu(shifted)
    except RuntimeError as e:
        raise FactorizationError(f"(A - i·mu) singular at mu={mu:g}: {e}", details={"mu": mu})
    return StateVector.from_vector(lu.solve(np.concatenate([f, g]).astype(complex)))


def reduction_check(gen: DiscreteGenerator, model: TransmissionModel1D, grid: Grid1D, mu: float,
                    forcing: Optional[SmoothForcing] = None) -> ReductionReport:
    """
    Solve the stationary system and measure how well w satisfies the reduced problem.

    Args:
        gen: generator assembled on (model, grid).
        model, grid: the geometry it was assembled on.
        mu: real frequency; |μ| enters the reduction.
        forcing: smooth data (f, g); zero forcing when None.

    Returns:
        ReductionReport with the nodal equation residual, interface value and
        flux jumps, outer traces and the key-lemma diagnostic.
    """
    forcing = forcing or SmoothForcing.zero()
    f, g = forcing.sample(grid)
    state = solve_stationary(gen, mu, f, g)
    u, v = state.u, state.v
    h = grid.spacing
    lap = gen.lap
    abs_mu = abs(mu)
    a = gen.damping_nodal
    c_node = h / lap.mass  # c at regular nodes, harmonic-type c at interfaces

    lap_v = lap.laplacian @ v
    w = -(lap.G @ u) - abs_mu * u + (a / model.c1) * lap_v
    phi = (g + 1j * mu * f) / c_node - abs_mu * a / (model.c1 * c_node) * lap_v
    pde = (lap.G @ w - abs_mu * w) / c_node - phi

    w_nodal = grid.to_nodal(w)
    value_jump = 0.0
    flux_jump = 0.0
    for node in grid.interface_nodes:
        left_value, left_slope = _one_sided(w_nodal, node, -1, h)
        right_value, right_slope = _one_sided(w_nodal, node, +1, h)
        value_jump = max(value_jump, abs(left_value - right_value))
        flux_jump = max(flux_jump, abs(left_slope - right_slope))
    trace = max(abs(_one_sided(w_nodal, 0, +1, h)[0]),
                abs(_one_sided(w_nodal, grid.n_cells, -1, h)[0]))

    data_norm = math.sqrt(h * float(np.sum(np.abs(lap.laplacian @ f) ** 2 + np.abs(g) ** 2)))
    # backward-error scale: |G|·|w| + |Φ|
    g_norm = float(abs(lap.G).sum(axis=1).max())
    scale = max(g_norm * float(np.max(np.abs(w))) + float(np.max(np.abs(phi))), 1e-300)

    ball = np.abs(grid.interior - model.damping.m) <= 0.5 * model.damping.w
    lhs = h * float(np.sum(np.abs(lap.laplacian @ u) ** 2 + np.abs(v) ** 2))
    rhs = data_norm ** 2 + gen.dissipation_rate(v) * model.c1 + h * float(np.sum(np.abs(u[ball]) ** 2))

    report = ReductionReport(
        mu=float(mu), n_cells=grid.n_cells,
        pde_residual=float(np.max(np.abs(pde))) / scale,
        value_jump=float(value_jump), flux_jump=float(flux_jump), trace_residual=float(trace),
        data_norm=data_norm, key_lemma_lhs=lhs, key_lemma_rhs=rhs,
    )
    logger.info(
        f"[OK] reduction mu={mu:g} N={grid.n_cells}: pde={report.pde_residual:.2e}, "
        f"jumps={report.value_jump:.2e}/{report.flux_jump:.2e}, trace={report.trace_residual:.2e}"
    )
    return report


def measured_order(coarse: float, fine: float, ratio: float = 2.0) -> float:
    """Observed convergence order between two grids refined by `ratio`."""
    if fine == 0.0:
        return math.inf if coarse > 0 else 0.0
    return math.log(coarse / fine) / math.log(ratio)
