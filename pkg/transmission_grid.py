"""
Uniform grid and transmission Laplacian for the 1-D plate.

Main components:
    - Grid1D: nodes x_j = j*h, interfaces and outer boundary on nodes
    - TransmissionLaplacian: stiffness K, lumped weighted mass M_c, G_h = M_c⁻¹K
    - build_grid / assemble_G / assemble_bilaplacian
    - export_matrix: Matrix Market coordinate dump

Unknowns are the interior nodes 1..N-1 (hinged outer conditions: u=0 at 0 and L
are eliminated). Unknown index i corresponds to node i+1.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import scipy.io
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal

from lab_errors import GridError
from plate_model import TransmissionModel1D

logger = logging.getLogger(__name__)

MIN_CELLS = 16
MAX_REFINEMENT_FACTOR = 1000


@dataclass(frozen=True)
class Grid1D:
    L: float
    n_cells: int
    ia: int  # node index of a_if
    ib: int  # node index of b_if

    @property
    def spacing(self) -> float:
        return self.L / self.n_cells

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_cells + 1) * self.spacing

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]

    @property
    def n_unknowns(self) -> int:
        return self.n_cells - 1

    @property
    def omega1_nodes(self) -> np.ndarray:
        return np.arange(self.ia + 1, self.ib)

    @property
    def omega2_nodes(self) -> np.ndarray:
        return np.concatenate([np.arange(1, self.ia), np.arange(self.ib + 1, self.n_cells)])

    @property
    def interface_nodes(self) -> Tuple[int, int]:
        return (self.ia, self.ib)

    @property
    def boundary_nodes(self) -> Tuple[int, int]:
        return (0, self.n_cells)

    def to_unknowns(self, nodal: np.ndarray) -> np.ndarray:
        """Drop the two Dirichlet nodes of a full nodal array."""
        nodal = np.asarray(nodal)
        if nodal.shape[0] != self.n_cells + 1:
            raise GridError(f"expected {self.n_cells + 1} nodal values, got {nodal.shape[0]}")
        return nodal[1:-1]

    def to_nodal(self, unknowns: np.ndarray) -> np.ndarray:
        """Pad interior values with the zero boundary values."""
        unknowns = np.asarray(unknowns)
        out = np.zeros(self.n_cells + 1, dtype=unknowns.dtype)
        out[1:-1] = unknowns
        return out


def _aligned(value: float, n: int, L: float) -> bool:
    scaled = value * n / L
    return abs(scaled - round(scaled)) <= 1e-9 * max(1.0, scaled)


def build_grid(model: TransmissionModel1D, n_cells: int) -> Grid1D:
    """
    Build the uniform grid, refining n_cells upward until both interfaces are nodes.

    Raises:
        GridError: n_cells below MIN_CELLS, no aligned cell count within reach,
            or the damping support dilated by one cell touching an interface.
    """
    if int(n_cells) != n_cells or n_cells < MIN_CELLS:
        raise GridError(f"numerics.n_cells: must be an integer >= {MIN_CELLS}, got {n_cells}")
    n_cells = int(n_cells)
    n = n_cells
    while not (_aligned(model.a_if, n, model.L) and _aligned(model.b_if, n, model.L)):
        n += 1
        if n > MAX_REFINEMENT_FACTOR * n_cells:
            raise GridError(
                f"no cell count in [{n_cells}, {n - 1}] puts a_if={model.a_if} and "
                f"b_if={model.b_if} on nodes"
            )
    if n != n_cells:
        logger.info(f"[GRID] n_cells adjusted {n_cells} -> {n} to align interfaces")

    grid = Grid1D(
        L=model.L,
        n_cells=n,
        ia=int(round(model.a_if * n / model.L)),
        ib=int(round(model.b_if * n / model.L)),
    )
    damping = model.damping
    if damping.is_damped:
        lo, hi = damping.support
        h = grid.spacing
        if not (lo - h > model.a_if and hi + h < model.b_if):
            raise GridError(
                f"damping support [{lo:.4g}, {hi:.4g}] dilated by h={h:.4g} reaches an interface"
            )
    return grid


@dataclass(frozen=True)
class TransmissionLaplacian:
    """
    K: stiffness (2,-1,-1)/h on interior unknowns.
    mass: lumped diagonal of M_c, h/c_j (interfaces: h/2·(1/c1 + 1/c2)).
    G = M_c⁻¹ K discretizes -cΔ; M_c G = K is symmetric positive definite.
    """
    K: sp.csr_matrix
    mass: np.ndarray
    spacing: float

    @cached_property
    def M(self) -> sp.csr_matrix:
        return sp.diags(self.mass).tocsr()

    @cached_property
    def G(self) -> sp.csr_matrix:
        return (sp.diags(1.0 / self.mass) @ self.K).tocsr()

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """Δ_h = -K/h, the standard 3-point second difference."""
        return (-self.K / self.spacing).tocsr()

    def self_adjointness_defect(self) -> float:
        """‖M_cG − (M_cG)ᵀ‖_max relative to ‖M_cG‖_max."""
        product = (self.M @ self.G).toarray()
        return float(np.max(np.abs(product - product.T)) / np.max(np.abs(product)))

    def symmetric_tridiagonal(self) -> Tuple[np.ndarray, np.ndarray]:
        """Diagonal and off-diagonal of M_c^{-1/2} K M_c^{-1/2}."""
        root = np.sqrt(self.mass)
        diag = self.K.diagonal() / self.mass
        off = self.K.diagonal(1) / (root[:-1] * root[1:])
        return diag, off

    def eigenvalues(self, count: Optional[int] = None) -> np.ndarray:
        """Lowest `count` eigenvalues of G (all if None), ascending."""
        diag, off = self.symmetric_tridiagonal()
        if count is None:
            return eigh_tridiagonal(diag, off, eigvals_only=True)
        return eigh_tridiagonal(diag, off, eigvals_only=True, select="i", select_range=(0, count - 1))

    def modes(self, count: int) -> Tuple[np.ndarray, np.ndarray]:
        """Lowest `count` eigenpairs of G with M_c-orthonormal eigenvectors (columns)."""
        diag, off = self.symmetric_tridiagonal()
        values, vectors = eigh_tridiagonal(diag, off, select="i", select_range=(0, count - 1))
        vectors = vectors / np.sqrt(self.mass)[:, None]
        # first significant entry of every mode is positive
        first = np.argmax(np.abs(vectors) > 1e-12 * np.abs(vectors).max(), axis=0)
        signs = np.sign(vectors[first, np.arange(vectors.shape[1])])
        return values, vectors * signs


def assemble_G(model: TransmissionModel1D, grid: Grid1D) -> TransmissionLaplacian:
    """Assemble K and M_c; interface nodes carry the harmonic-type average of 1/c."""
    h = grid.spacing
    n = grid.n_unknowns
    K = sp.diags(
        [np.full(n - 1, -1.0), np.full(n, 2.0), np.full(n - 1, -1.0)],
        offsets=[-1, 0, 1],
    ) / h

    inverse_speed = 1.0 / model.speed(grid.interior)
    for node in grid.interface_nodes:
        inverse_speed[node - 1] = 0.5 * (1.0 / model.c1 + 1.0 / model.c2)
    lap = TransmissionLaplacian(K=K.tocsr(), mass=h * inverse_speed, spacing=h)
    logger.debug(f"[GRID] assembled G_h: {n} unknowns, h={h:.4g}")
    return lap


def assemble_bilaplacian(model: TransmissionModel1D, grid: Grid1D,
                         lap: TransmissionLaplacian) -> sp.csr_matrix:
    """
    Fourth-order block B = G_h².

    The energy ½‖cΔu‖²_{c⁻¹} is the quadratic form ½uᵀ(G_hᵀ M_c G_h)u = ½uᵀK M_c⁻¹K u.
    """
    if lap.K.shape[0] != grid.n_unknowns:
        raise GridError("bilaplacian: Laplacian was assembled on a different grid")
    return (lap.G @ lap.G).tocsr()


def energy_form(lap: TransmissionLaplacian) -> sp.csr_matrix:
    """K M_c⁻¹ K, the stiffness part of the energy Gram matrix."""
    return (lap.K @ sp.diags(1.0 / lap.mass) @ lap.K).tocsr()


def export_matrix(matrix: Union[sp.spmatrix, np.ndarray], path: Union[str, Path]) -> Path:
    """Write a matrix in Matrix Market coordinate format (row, col, value)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scipy.io.mmwrite(str(path), sp.coo_matrix(matrix))
    # mmwrite appends .mtx when missing
    written = path if path.suffix == ".mtx" else path.with_name(path.name + ".mtx")
    logger.info(f"[OK] matrix exported to {written}")
    return written
