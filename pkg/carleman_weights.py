"""
Two-phase Carleman weight systems on an annulus.

Main components:
    - find_critical_points: grid scan of |∇ψ| minima + damped Newton refinement
    - build_weight_pair: Morse phase ψ₁, arcs through its critical points,
      flow-composed partner ψ₂ = ψ₁∘φ, and the pair invariants
    - ConjugatedSymbol / poisson_bracket: {Re p_φ, Im p_φ} for p = |ξ|², φ = e^{λψ}
    - finite_difference_bracket: independent difference-quotient evaluation
    - certify_subellipticity: λ-doubling search for a positive bracket on the
      characteristic set over a sampled region
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from lab_errors import CertificationError, LabValidationError, WeightConstructionError
from phase_functions import (
    FlowComposedPhase,
    FlowMap,
    GaussianDip,
    Phase,
    QuadraticPhase,
    RadialDistance,
    TubeField,
)
from plate_model import AnnularDomain2D

logger = logging.getLogger(__name__)

CRITICAL_RTOL = 1e-10
MERGE_DISTANCE = 1e-8
SCAN_SIDE = 161
MORSE_PERTURBATION = 1e-3
LAMBDA_CAP = 2 ** 10
BOUNDARY_SAMPLES = 256
NORMAL_DERIVATIVE_TOL = 1e-8
ARC_ROTATIONS = 6
SEED_RETRIES = 3


# --- critical points ---

@dataclass
class CriticalPoint:
    position: Tuple[float, float]
    value: float
    gradient_norm: float
    hessian_eigenvalues: Tuple[float, float]
    hessian_vectors: np.ndarray = field(repr=False)

    @property
    def index(self) -> int:
        return int(sum(1 for ev in self.hessian_eigenvalues if ev < 0))

    @property
    def kind(self) -> str:
        low, high = self.hessian_eigenvalues
        if abs(low) <= 1e-8 * max(abs(high), 1.0) or abs(high) <= 1e-8 * max(abs(low), 1.0):
            return "degenerate"
        return ("minimum", "saddle", "maximum")[self.index]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "position": list(self.position),
            "value": self.value,
            "gradient_norm": self.gradient_norm,
            "hessian_eigenvalues": list(self.hessian_eigenvalues),
            "kind": self.kind,
        }


def _critical_point(phase: Phase, x: np.ndarray) -> CriticalPoint:
    value, grad, hess = phase.evaluate(x[None, :])
    eigvals, eigvecs = np.linalg.eigh(hess[0])
    return CriticalPoint(
        position=(float(x[0]), float(x[1])),
        value=float(value[0]),
        gradient_norm=float(np.linalg.norm(grad[0])),
        hessian_eigenvalues=(float(eigvals[0]), float(eigvals[1])),
        hessian_vectors=eigvecs,
    )


def _newton(phase: Phase, domain: AnnularDomain2D, start: np.ndarray, tol: float,
            cell: float) -> Optional[np.ndarray]:
    """Damped Newton on ∇ψ = 0 with backtracking on |∇ψ|; None when it leaves the domain or stalls."""
    x = start.copy()
    for _ in range(60):
        _, grad, hess = phase.evaluate(x[None, :])
        g = grad[0]
        g_norm = float(np.linalg.norm(g))
        if g_norm < tol:
            return x
        try:
            step = np.linalg.solve(hess[0], g)
        except np.linalg.LinAlgError:
            step = cell * g / g_norm
        alpha = 1.0
        while alpha > 1e-6:
            trial = x - alpha * step
            if domain.contains(trial[None, :])[0]:
                if np.linalg.norm(phase.gradient(trial[None, :])[0]) < g_norm:
                    break
            alpha *= 0.5
        else:
            if domain.boundary_distance(x[None, :])[0] < 2 * cell and g_norm < 1e-3 * tol / CRITICAL_RTOL:
                raise WeightConstructionError(
                    f"critical point on the boundary near ({x[0]:.4f}, {x[1]:.4f})",
                    details={"position": x.tolist(), "gradient_norm": g_norm},
                )
            return None
        x = trial
    return x if np.linalg.norm(phase.gradient(x[None, :])[0]) < tol else None


def find_critical_points(phase: Phase, domain: AnnularDomain2D, n_side: int = SCAN_SIDE) -> List[CriticalPoint]:
    """
    Critical points of a phase inside the domain.

    Candidates are grid-local minima of |∇ψ| small enough to hide a zero within a
    cell given the local curvature. Each candidate is refined by Newton; a point is
    critical when |∇ψ| < 1e-10·(largest |∇ψ| on the grid). Points closer than 1e-8
    are merged.

    Raises:
        WeightConstructionError: a critical point sits on the boundary.
    """
    axis = np.linspace(-domain.outer_radius, domain.outer_radius, n_side)
    cell = float(axis[1] - axis[0])
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    points = np.column_stack([xx.ravel(), yy.ravel()])
    inside = domain.contains(points)

    grad_norm = np.full(points.shape[0], np.inf)
    curvature = np.zeros(points.shape[0])
    _, grad, hess = phase.evaluate(points[inside])
    grad_norm[inside] = np.linalg.norm(grad, axis=1)
    curvature[inside] = np.linalg.norm(hess, ord=2, axis=(1, 2))
    scale = float(np.max(grad_norm[inside]))
    tol = CRITICAL_RTOL * max(scale, 1e-300)

    field_2d = grad_norm.reshape(n_side, n_side)
    padded = np.pad(field_2d, 1, constant_values=np.inf)
    is_min = np.ones_like(field_2d, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            neighbour = padded[1 + di:1 + di + n_side, 1 + dj:1 + dj + n_side]
            is_min &= field_2d <= neighbour
    candidates = np.flatnonzero(is_min.ravel() & inside & (grad_norm <= 2.0 * cell * curvature))

    found: List[np.ndarray] = []
    for index in candidates:
        x = _newton(phase, domain, points[index], tol, cell)
        if x is None:
            continue
        if domain.boundary_distance(x[None, :])[0] < cell:
            raise WeightConstructionError(
                f"critical point on the boundary at ({x[0]:.4f}, {x[1]:.4f})",
                details={"position": x.tolist()},
            )
        if all(np.linalg.norm(x - other) > MERGE_DISTANCE for other in found):
            found.append(x)

    found.sort(key=lambda p: (p[0], p[1]))
    return [_critical_point(phase, x) for x in found]


# --- weight pair ---

@dataclass
class WeightPair:
    domain: AnnularDomain2D
    psi1: Phase
    psi2: Phase
    lam: float
    epsilon: float
    critical1: List[CriticalPoint]
    critical2: List[CriticalPoint]
    tubes: List[TubeField]
    seed: int
    invariants: Dict[str, Any] = field(default_factory=dict)

    def phase(self, k: int) -> Phase:
        return self.psi1 if k == 1 else self.psi2

    def critical(self, k: int) -> List[CriticalPoint]:
        return self.critical1 if k == 1 else self.critical2

    def weight(self, k: int, x: np.ndarray, lam: Optional[float] = None) -> np.ndarray:
        """φ_k = e^{λψ_k}."""
        return np.exp((lam or self.lam) * self.phase(k).value(x))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "hole_center": list(self.domain.hole_center),
            "hole_radius": self.domain.hole_radius,
            "outer_radius": self.domain.outer_radius,
            "seed": self.seed,
            "lambda": self.lam,
            "epsilon": self.epsilon,
            "critical_points_psi1": [c.to_dict() for c in self.critical1],
            "critical_points_psi2": [c.to_dict() for c in self.critical2],
            "arcs": [
                {"center": t.center.tolist(), "direction": t.direction.tolist(), "length": t.length}
                for t in self.tubes
            ],
            "invariants": self.invariants,
        }


def default_dips(domain: AnnularDomain2D) -> List[GaussianDip]:
    """
    One dip on the far side of an off-centre hole, midway across the gap; none
    for a concentric hole. Depth/width = 5 gives one saddle and one minimum.
    """
    offset = float(np.linalg.norm(domain.center))
    if offset < 1e-12:
        return []
    away = -domain.center / offset
    gap_start = domain.hole_radius
    gap_end = domain.outer_radius + offset
    s_along = 0.14 * (gap_end - gap_start)
    return [GaussianDip(
        center=domain.center + 0.5 * (gap_start + gap_end) * away,
        depth=5.0 * s_along,
        s_along=s_along,
        s_across=0.5 * s_along,
        angle=math.atan2(away[1], away[0]),
    )]


def morse_perturbation(seed: int, size: float = MORSE_PERTURBATION) -> QuadraticPhase:
    rng = np.random.default_rng(seed)
    return QuadraticPhase(size * rng.standard_normal((2, 2)), size * rng.standard_normal(2))


def _rectangles_overlap(first: TubeField, second: TubeField) -> bool:
    """Separating-axis test on the two support rectangles."""
    a, b = first.support_corners(), second.support_corners()
    for axis in (first.direction, first.normal, second.direction, second.normal):
        pa, pb = a @ axis, b @ axis
        if pa.max() < pb.min() or pb.max() < pa.min():
            return False
    return True


def _tube_inside(domain: AnnularDomain2D, tube: TubeField, margin: float) -> bool:
    ha, hr = tube.half_extents
    s = np.linspace(-ha, ha, 41)
    r = np.linspace(-hr, hr, 21)
    ss, rr = np.meshgrid(s, r, indexing="ij")
    pts = tube.center + ss.ravel()[:, None] * tube.direction + rr.ravel()[:, None] * tube.normal
    return bool(np.all(domain.boundary_distance(pts) > margin))


def _arc_length(phase: Phase, c: CriticalPoint, direction: np.ndarray, length: float) -> Optional[float]:
    """Halve the arc until both ends are strictly above ψ(c)."""
    center = np.asarray(c.position)
    for _ in range(8):
        ends = np.vstack([center + length * direction, center - length * direction])
        if np.all(phase.value(ends) > c.value):
            return length
        length *= 0.5
    return None


def _build_tubes(psi1: Phase, domain: AnnularDomain2D, critical: Sequence[CriticalPoint],
                 arc_length: float, taper: float, rng: np.random.Generator) -> List[TubeField]:
    """
    One straight arc per critical point along the largest-curvature direction,
    rotated in ±15° steps (order drawn from rng) until the tube fits inside the
    domain, misses every other tube and contains no other critical point.
    """
    tubes: List[TubeField] = []
    positions = np.array([c.position for c in critical])
    for i, c in enumerate(critical):
        base = c.hessian_vectors[:, 1]
        base_angle = math.atan2(base[1], base[0])
        offsets = [0.0]
        for step in range(1, ARC_ROTATIONS + 1):
            pair = [step * math.pi / 12, -step * math.pi / 12]
            if rng.random() < 0.5:
                pair.reverse()
            offsets.extend(pair)

        chosen = None
        for offset in offsets:
            angle = base_angle + offset
            direction = np.array([math.cos(angle), math.sin(angle)])
            length = _arc_length(psi1, c, direction, arc_length)
            if length is None:
                continue
            tube = TubeField(c.position, direction, length,
                             core_axial=1.5 * length, core_radial=0.5 * length, taper=taper)
            if not _tube_inside(domain, tube, margin=0.25 * taper):
                continue
            if any(_rectangles_overlap(tube, other) for other in tubes):
                continue
            others = np.delete(positions, i, axis=0)
            if len(others) and tube.in_support(others).any():
                continue
            chosen = tube
            break
        if chosen is None:
            raise WeightConstructionError(
                f"no disjoint arc for critical point at {c.position}",
                details={"position": list(c.position), "tried_rotations": len(offsets)},
            )
        if offset != 0.0:
            logger.info(f"[OK] arc at {c.position} rotated by {math.degrees(offset):.0f} deg")
        tubes.append(chosen)
    return tubes


def _normal_derivative(phase: Phase, points: np.ndarray, normals: np.ndarray) -> np.ndarray:
    return np.sum(phase.gradient(points) * normals, axis=1)


def validate_weight_pair(pair: WeightPair) -> Dict[str, Any]:
    """
    Check the pair invariants at the located critical points and on the boundary.

    Raises:
        WeightConstructionError: any invariant fails; the measured values are attached.
    """
    report: Dict[str, Any] = {}
    failures: List[str] = []
    scale = float(np.max(np.linalg.norm(pair.psi1.gradient(pair.domain.sample_grid(41)), axis=1)))

    for k, other in ((1, 2), (2, 1)):
        crits = pair.critical(k)
        if not crits:
            continue
        pts = np.array([c.position for c in crits])
        own = np.array([c.value for c in crits])
        partner_value = pair.phase(other).value(pts)
        partner_grad = np.linalg.norm(pair.phase(other).gradient(pts), axis=1)
        report[f"min_gap_psi{other}_over_psi{k}"] = float(np.min(partner_value - own))
        report[f"min_grad_psi{other}_at_crit{k}"] = float(np.min(partner_grad))
        if np.any(partner_value <= own):
            failures.append(f"psi{other} <= psi{k} at a critical point of psi{k}")
        if np.any(partner_grad <= CRITICAL_RTOL * scale * 1e3):
            failures.append(f"psi{other} has vanishing gradient at a critical point of psi{k}")
        if any(c.index == 2 for c in crits):
            failures.append(f"psi{k} has an interior maximum")
        if any(c.kind == "degenerate" for c in crits):
            failures.append(f"psi{k} has a degenerate critical point")

    balls = [np.asarray(c.position) for c in pair.critical1], [np.asarray(c.position) for c in pair.critical2]
    cross = [float(np.linalg.norm(p - q)) for p in balls[0] for q in balls[1]]
    if cross and min(cross) <= 4.0 * pair.epsilon:
        failures.append("2eps-balls around critical points of psi1 and psi2 intersect")
    every = balls[0] + balls[1]
    if every:
        depth = float(np.min(pair.domain.boundary_distance(np.array(every))))
        report["min_boundary_distance"] = depth
        if depth <= 2.0 * pair.epsilon:
            failures.append("a 2eps-ball leaves the domain")

    hole_pts, hole_n = pair.domain.hole_boundary(BOUNDARY_SAMPLES)
    outer_pts, outer_n = pair.domain.outer_boundary(BOUNDARY_SAMPLES)
    step = 1e-4 * pair.domain.hole_radius
    for k in (1, 2):
        phase = pair.phase(k)
        hole_dn = _normal_derivative(phase, hole_pts, hole_n)
        outer_dn = _normal_derivative(phase, outer_pts, outer_n)
        report[f"max_dn_psi{k}_hole"] = float(hole_dn.max())
        report[f"min_dn_psi{k}_outer"] = float(outer_dn.min())
        if hole_dn.max() >= 0:
            failures.append(f"d_n psi{k} must be < 0 on the hole boundary")
        if outer_dn.min() <= 0:
            failures.append(f"d_n psi{k} must be > 0 on the outer boundary")

    mismatch = 0.0
    for pts, normals in ((hole_pts, hole_n), (outer_pts, outer_n)):
        inner = pts - step * normals
        one_sided = [(pair.phase(k).value(pts) - pair.phase(k).value(inner)) / step for k in (1, 2)]
        mismatch = max(mismatch, float(np.max(np.abs(one_sided[0] - one_sided[1]))))
    report["normal_derivative_mismatch"] = mismatch
    if mismatch > NORMAL_DERIVATIVE_TOL:
        failures.append("boundary normal derivatives of psi2 and psi1 differ")

    if failures:
        raise WeightConstructionError("weight pair invariants violated: " + "; ".join(failures),
                                      details={"failures": failures, **report})
    return report


def build_weight_pair(domain: AnnularDomain2D, seed: int = 0, dips: Optional[Sequence[Phase]] = None,
                      arc_length: float = 0.08, taper: float = 0.08, flow_steps: int = 64,
                      lam: float = 1.0, scan_side: int = SCAN_SIDE) -> WeightPair:
    """
    Build (ψ₁, ψ₂) on an annulus.

    ψ₁ is the distance to the hole centre plus the dips (default_dips when None)
    plus a seeded Morse perturbation of size 1e-3. Each critical point c gets a
    straight arc with strictly higher ends and a tube field translating c - ℓe
    onto c in unit time; ψ₂ = ψ₁∘φ. Arc failures are retried with fresh child
    seeds before giving up.

    Args:
        domain: annulus geometry.
        seed: fixes the Morse perturbation and the rotation order of the arcs.
        dips: extra phase terms; pass [] for the bare radial field.
        arc_length: initial arc half-length ℓ.
        taper: width of the tube cutoff.
        flow_steps: RK4 steps of the time-1 flow.
        lam: λ recorded on the pair (certification searches its own).

    Raises:
        WeightConstructionError: critical point on the boundary, no disjoint arcs
            after the retries, or an invariant fails.
    """
    dips = default_dips(domain) if dips is None else list(dips)
    children = np.random.SeedSequence(seed).spawn(SEED_RETRIES)
    last_error: Optional[WeightConstructionError] = None

    for attempt, child in enumerate(children):
        morse_seed, arc_seed = child.generate_state(2)
        psi1: Phase = RadialDistance(domain.center)
        for dip in dips:
            psi1 = psi1 + dip
        psi1 = psi1 + morse_perturbation(int(morse_seed))

        critical1 = find_critical_points(psi1, domain, scan_side)
        logger.info(f"[OK] psi1: {len(critical1)} critical point(s) "
                    f"{[c.kind for c in critical1]} (seed={seed}, attempt={attempt + 1})")
        try:
            tubes = _build_tubes(psi1, domain, critical1, arc_length, taper,
                                 np.random.default_rng(int(arc_seed)))
        except WeightConstructionError as e:
            logger.warning(f"[WARN] arc construction failed: {e}; retrying")
            last_error = e
            continue

        if tubes:
            psi2: Phase = FlowComposedPhase(psi1, FlowMap(tubes, flow_steps))
            critical2 = find_critical_points(psi2, domain, scan_side)
        else:
            psi2, critical2 = psi1, list(critical1)

        cross = [float(np.linalg.norm(np.subtract(p.position, q.position)))
                 for p in critical1 for q in critical2]
        epsilon = 0.05 * domain.hole_radius
        if cross:
            depth = float(np.min(domain.boundary_distance(
                np.array([c.position for c in critical1 + critical2]))))
            epsilon = min(min(cross) / 5.0, depth / 3.0, min(t.core_radial for t in tubes) / 2.5)

        pair = WeightPair(domain=domain, psi1=psi1, psi2=psi2, lam=lam, epsilon=epsilon,
                          critical1=critical1, critical2=critical2, tubes=tubes, seed=seed)
        pair.invariants = validate_weight_pair(pair)
        logger.info(f"[OK] weight pair: {len(critical1)}+{len(critical2)} critical points, eps={epsilon:.4g}")
        return pair

    raise WeightConstructionError(f"arcs could not be made disjoint after {SEED_RETRIES} seeds",
                                  details={"seed": seed, "last_error": str(last_error)})


# --- conjugated symbol and bracket ---

@dataclass
class ConjugatedSymbol:
    """p_φ(x, ξ) = p(x, ξ + i∇φ) for p = |ξ|² and φ = e^{λψ}."""
    phase: Phase
    lam: float

    def weight_derivatives(self, x: np.ndarray):
        """φ (N,), ∇φ (N, 2), φ'' (N, 2, 2)."""
        psi, grad, hess = self.phase.evaluate(x)
        phi = np.exp(self.lam * psi)
        grad_phi = self.lam * phi[:, None] * grad
        hess_phi = phi[:, None, None] * (self.lam ** 2 * grad[:, :, None] * grad[:, None, :] + self.lam * hess)
        return phi, grad_phi, hess_phi

    def real_part(self, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        _, grad_phi, _ = self.weight_derivatives(x)
        return np.sum(xi * xi, axis=1) - np.sum(grad_phi * grad_phi, axis=1)

    def imag_part(self, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        _, grad_phi, _ = self.weight_derivatives(x)
        return 2.0 * np.sum(xi * grad_phi, axis=1)


def poisson_bracket(symbol: ConjugatedSymbol, x, xi) -> np.ndarray:
    """
    {Re p_φ, Im p_φ}(x, ξ) = 4ξᵀφ''ξ + 4∇φᵀφ''∇φ with closed-form derivatives.

    On the characteristic set this is 4λe^{λψ}ξᵀψ''ξ + 4e^{3λψ}(λ⁴|∇ψ|⁴ + λ³∇ψᵀψ''∇ψ).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    _, grad_phi, hess_phi = symbol.weight_derivatives(x)
    return (4.0 * np.einsum("ni,nij,nj->n", xi, hess_phi, xi)
            + 4.0 * np.einsum("ni,nij,nj->n", grad_phi, hess_phi, grad_phi))


def finite_difference_bracket(symbol: ConjugatedSymbol, x, xi, step: float = 1e-3) -> np.ndarray:
    """{f, g} = Σ_j ∂_{ξ_j}f ∂_{x_j}g - ∂_{x_j}f ∂_{ξ_j}g by fourth-order central differences."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    stencil = ((-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0))

    def partial(func, wrt_x: bool, j: int) -> np.ndarray:
        total = np.zeros(x.shape[0])
        for shift, weight in stencil:
            offset = np.zeros(2)
            offset[j] = shift * step
            args = (x + offset, xi) if wrt_x else (x, xi + offset)
            total += weight * func(*args)
        return total / (12.0 * step)

    bracket = np.zeros(x.shape[0])
    for j in range(2):
        bracket += (partial(symbol.real_part, False, j) * partial(symbol.imag_part, True, j)
                    - partial(symbol.real_part, True, j) * partial(symbol.imag_part, False, j))
    return bracket


# --- certification ---

@dataclass
class SubellipticityCertificate:
    region: str
    certified: bool
    min_bracket: float
    lambda_used: float
    samples: int
    min_gradient: float
    history: List[Tuple[float, float]]
    reason: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "region": self.region,
            "certified": self.certified,
            "min_bracket": self.min_bracket,
            "lambda_used": self.lambda_used,
            "samples": self.samples,
            "min_gradient": self.min_gradient,
            "history": [list(h) for h in self.history],
            "reason": self.reason,
        }

    def require(self) -> "SubellipticityCertificate":
        if not self.certified:
            raise CertificationError(f"sub-ellipticity not certified on region {self.region}: {self.reason}",
                                     details=self.to_dict())
        return self


def normalized_bracket(phase: Phase, lam: float, x: np.ndarray) -> np.ndarray:
    """Bracket on the characteristic set divided by 4λ³e^{3λψ}: λ|∇ψ|⁴ + ∇ψᵀψ''∇ψ + |∇ψ|²ηᵀψ''η."""
    _, grad, hess = phase.evaluate(x)
    g2 = np.sum(grad * grad, axis=1)
    eta = np.column_stack([-grad[:, 1], grad[:, 0]]) / np.sqrt(np.where(g2 > 0, g2, 1.0))[:, None]
    along = np.einsum("ni,nij,nj->n", grad, hess, grad)
    across = np.einsum("ni,nij,nj->n", eta, hess, eta)
    return lam * g2 ** 2 + along + g2 * across


def certify_subellipticity(pair: WeightPair, region_id: Union[int, str], n_side: int = 120,
                           lambda0: float = 1.0, cap: float = LAMBDA_CAP,
                           degenerate_rtol: float = 1e-8) -> SubellipticityCertificate:
    """
    Search λ = λ₀, 2λ₀, ... ≤ cap for a positive bracket on the characteristic set.

    Region k (1 or 2) is the domain minus the ε-balls around the critical points of
    ψ_k; "full" keeps them (and adds the critical points themselves), which makes
    the characteristic set degenerate whenever ψ has critical points.

    Returns:
        A certificate; certified=False with a reason when the region is degenerate
        or the cap is reached. Call .require() to turn that into CertificationError.
    """
    if region_id not in (1, 2, "1", "2", "full"):
        raise LabValidationError(f"region_id must be 1, 2 or 'full', got {region_id!r}")
    k = 1 if region_id == "full" else int(region_id)
    phase = pair.phase(k)
    crit = np.array([c.position for c in pair.critical(k)]).reshape(-1, 2)

    x = pair.domain.sample_grid(n_side)
    if region_id == "full":
        x = np.vstack([x, crit]) if len(crit) else x
    elif len(crit):
        dist = np.min(np.linalg.norm(x[:, None, :] - crit[None, :, :], axis=2), axis=1)
        x = x[dist > pair.epsilon]

    grad_norm = np.linalg.norm(phase.gradient(x), axis=1)
    min_gradient = float(grad_norm.min())
    samples = 2 * x.shape[0]
    label = str(region_id)
    if min_gradient <= degenerate_rtol * float(grad_norm.max()):
        logger.warning(f"[WARN] region {label}: |grad psi| vanishes, characteristic set degenerate")
        return SubellipticityCertificate(label, False, 0.0, lambda0, samples, min_gradient, [],
                                         reason="degenerate characteristic set (|grad phi| = 0 in region)")

    history: List[Tuple[float, float]] = []
    lam = lambda0
    while lam <= cap:
        current = float(np.min(normalized_bracket(phase, lam, x)))
        history.append((lam, current))
        if current > 0:
            logger.info(f"[OK] region {label}: bracket > 0 at lambda={lam:g} over {samples} samples")
            return SubellipticityCertificate(label, True, current, lam, samples, min_gradient, history)
        lam *= 2.0
    logger.warning(f"[WARN] region {label}: lambda cap {cap:g} reached without a positive bracket")
    return SubellipticityCertificate(label, False, history[-1][1], history[-1][0], samples, min_gradient,
                                     history, reason=f"lambda cap {cap:g} reached")
