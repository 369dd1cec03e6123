"""
Quadrature test of the transmission Carleman inequality in 1-D.

Geometry on [0, L]:
    𝒪₁ = Ω₁ minus the ball [m - r, m + r] around the damping centre,
    𝒪₂ = Ω₂ = (0, a_if) ∪ (b_if, L),
    γ = {a_if, b_if}, γ₁ = {m - r, m + r}, γ₂ = {0, L}.

With P_k = -d²/dx² - α_k/h (α_k = 1/c_k) and manufactured w₁, w₂, the ten
left-hand and the right-hand terms of the weighted inequality are evaluated by
Simpson quadrature. Every term is scaled by e^{-2Φ/h} (Φ the largest weight
value) so small h does not overflow; the ratio is unaffected.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import simpson

from lab_errors import CarlemanPreconditionError
from plate_model import TransmissionModel1D

logger = logging.getLogger(__name__)

H0_DEFAULT = 0.2
QUADRATURE_POINTS = 4001
TRACE_TOL = 1e-12


@dataclass(frozen=True)
class PhasePair1D:
    """
    Piecewise-linear ψ_k, φ_k = e^{λψ_k}.

    ψ₁ = κ₁(x - a_if) on the left part of 𝒪₁ and -κ₁(x - b_if) on the right;
    ψ₂ = κ₂(x - a_if) + shift on (0, a_if) and -κ₂(x - b_if) + shift on (b_if, L).
    With κ₁ > κ₂ > 0 and shift = 0 the interface conditions hold.
    """
    kappa1: float = 2.0
    kappa2: float = 1.0
    lam: float = 1.0
    shift: float = 0.0

    def psi(self, k: int, x: np.ndarray, model: TransmissionModel1D) -> Tuple[np.ndarray, np.ndarray]:
        kappa = self.kappa1 if k == 1 else self.kappa2
        x = np.asarray(x, dtype=float)
        left = x < model.damping.m
        value = np.where(left, kappa * (x - model.a_if), -kappa * (x - model.b_if))
        slope = np.where(left, kappa, -kappa)
        if k == 2:
            value = value + self.shift
        return value, slope

    def phi(self, k: int, x: np.ndarray, model: TransmissionModel1D) -> Tuple[np.ndarray, np.ndarray]:
        """φ_k and φ_k' at x."""
        value, slope = self.psi(k, x, model)
        phi = np.exp(self.lam * value)
        return phi, self.lam * slope * phi


@dataclass(frozen=True)
class ManufacturedPair:
    """
    w₁ = w₂ = amplitude·sin(mode·πx/L); `w2_shift` adds a constant to w₂ only,
    which breaks w₂ = 0 on γ₂ and makes e₁ nonzero.
    """
    amplitude: float = 1.0
    mode: int = 1
    w2_shift: float = 0.0

    def evaluate(self, k: int, x: np.ndarray, L: float):
        """w_k, w_k', w_k'' at x."""
        k_wave = self.mode * math.pi / L
        s, c = np.sin(k_wave * x), np.cos(k_wave * x)
        w = self.amplitude * s
        if k == 2:
            w = w + self.w2_shift
        return w, self.amplitude * k_wave * c, -self.amplitude * k_wave ** 2 * s


@dataclass
class CarlemanRatio:
    h: float
    lhs_terms: Dict[str, float]
    rhs_terms: Dict[str, float]
    log_scale: float = 0.0
    ball_radius: float = 0.0

    @property
    def lhs(self) -> float:
        return float(sum(self.lhs_terms.values()))

    @property
    def rhs(self) -> float:
        return float(sum(self.rhs_terms.values()))

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else 0.0

    def to_row(self) -> Dict[str, float]:
        row = {"h": self.h, "lhs": self.lhs, "rhs": self.rhs, "ratio": self.ratio, "log_scale": self.log_scale}
        row.update({f"lhs_{k}": v for k, v in self.lhs_terms.items()})
        row.update({f"rhs_{k}": v for k, v in self.rhs_terms.items()})
        return row


@dataclass
class Geometry1D:
    omega1: List[Tuple[float, float]] = field(default_factory=list)
    omega2: List[Tuple[float, float]] = field(default_factory=list)
    # (point, outward normal of 𝒪₁) on γ and γ₁; outward normal of 𝒪₂ on γ₂
    gamma: List[Tuple[float, float]] = field(default_factory=list)
    gamma1: List[Tuple[float, float]] = field(default_factory=list)
    gamma2: List[Tuple[float, float]] = field(default_factory=list)


def carleman_geometry(model: TransmissionModel1D, ball_radius: Optional[float] = None) -> Geometry1D:
    m = model.damping.m
    r = 0.5 * model.damping.w if ball_radius is None else float(ball_radius)
    if r <= 0 or m - r <= model.a_if or m + r >= model.b_if:
        raise CarlemanPreconditionError(
            f"carleman.ball_radius: [{m - r:g}, {m + r:g}] must lie inside ({model.a_if:g}, {model.b_if:g})"
        )
    return Geometry1D(
        omega1=[(model.a_if, m - r), (m + r, model.b_if)],
        omega2=[(0.0, model.a_if), (model.b_if, model.L)],
        gamma=[(model.a_if, -1.0), (model.b_if, 1.0)],
        gamma1=[(m - r, 1.0), (m + r, -1.0)],
        gamma2=[(0.0, -1.0), (model.L, 1.0)],
    )


def check_phase_pair(model: TransmissionModel1D, pair: PhasePair1D, geometry: Geometry1D,
                     check_gamma1: bool = True) -> None:
    """
    Interface and boundary conditions on the weights.

    Raises:
        CarlemanPreconditionError: trace mismatch on γ, wrong normal signs, or
            (∂ₙφ₁)² <= (∂ₙφ₂)² on γ; ∂ₙφ₁ = 0 on γ₁ when check_gamma1.
    """
    if not pair.kappa1 > pair.kappa2 > 0 or pair.lam <= 0:
        raise CarlemanPreconditionError("carleman: need kappa1 > kappa2 > 0 and lam > 0")
    for x, normal in geometry.gamma:
        phi1, d1 = pair.phi(1, np.array([x]), model)
        phi2, d2 = pair.phi(2, np.array([x]), model)
        if abs(phi1[0] - phi2[0]) > TRACE_TOL * max(abs(phi1[0]), 1.0):
            raise CarlemanPreconditionError(
                f"phase traces differ on the interface x={x:g}: phi1={phi1[0]:.6g}, phi2={phi2[0]:.6g}"
            )
        dn1, dn2 = normal * d1[0], normal * d2[0]
        if not (dn1 < 0 and dn2 < 0 and dn1 ** 2 > dn2 ** 2):
            raise CarlemanPreconditionError(
                f"normal derivatives at x={x:g} violate d_n phi_k < 0, (d_n phi1)^2 > (d_n phi2)^2: "
                f"{dn1:.4g}, {dn2:.4g}"
            )
    for x, normal in geometry.gamma2:
        _, d2 = pair.phi(2, np.array([x]), model)
        if normal * d2[0] >= 0:
            raise CarlemanPreconditionError(f"d_n phi2 must be < 0 on the outer boundary x={x:g}")
    if check_gamma1:
        for x, normal in geometry.gamma1:
            _, d1 = pair.phi(1, np.array([x]), model)
            if abs(d1[0]) == 0.0:
                raise CarlemanPreconditionError(f"d_n phi1 vanishes on the ball boundary x={x:g}")


def carleman_ratio(model: TransmissionModel1D, pair: PhasePair1D, h: float,
                   manufactured: Optional[ManufacturedPair] = None,
                   quadrature_points: int = QUADRATURE_POINTS, h0: float = H0_DEFAULT,
                   ball_radius: Optional[float] = None, check_gamma1: bool = True) -> CarlemanRatio:
    """
    Both sides of the weighted inequality for one h, term by term.

    Args:
        model: transmission model (interfaces, c₁, c₂, damping centre/width).
        pair: 1-D phases satisfying the interface conditions.
        h: semiclassical parameter in (0, h0].
        manufactured: w₁, w₂; defaults to sin(πx/L) on both sides.
        quadrature_points: Simpson nodes per component interval.
        ball_radius: radius of the removed ball; w/2 when None.
        check_gamma1: enforce ∂ₙφ₁ ≠ 0 on γ₁.

    Raises:
        CarlemanPreconditionError: h out of range, phases violating the interface
            conditions, or w₂ ≠ 0 on γ₂.
    """
    if not 0 < h <= h0:
        raise CarlemanPreconditionError(f"carleman: h={h:g} must lie in (0, {h0:g}]")
    manufactured = manufactured or ManufacturedPair()
    geometry = carleman_geometry(model, ball_radius)
    check_phase_pair(model, pair, geometry, check_gamma1)

    scale_w = max(abs(manufactured.amplitude), abs(manufactured.w2_shift), 1e-300)
    for x, _ in geometry.gamma2:
        w2 = manufactured.evaluate(2, np.array([x]), model.L)[0][0]
        if abs(w2) > TRACE_TOL * scale_w:
            raise CarlemanPreconditionError(f"w2 must vanish on the outer boundary: w2({x:g}) = {w2:.3g}")

    alphas = {1: 1.0 / model.c1, 2: 1.0 / model.c2}
    parts = {1: geometry.omega1, 2: geometry.omega2}

    # largest weight value, for the e^{-2Φ/h} scaling
    peak = max(float(np.max(pair.phi(k, np.linspace(a, b, 65), model)[0]))
               for k in (1, 2) for a, b in parts[k])

    def weight_sq(k: int, x: np.ndarray) -> np.ndarray:
        return np.exp(2.0 * (pair.phi(k, x, model)[0] - peak) / h)

    def interior(k: int, power: int, which: str) -> float:
        total = 0.0
        for a, b in parts[k]:
            x = np.linspace(a, b, quadrature_points)
            w, dw, d2w = manufactured.evaluate(k, x, model.L)
            values = {"w": w, "dw": dw, "f": -d2w - (alphas[k] / h) * w}[which]
            total += float(simpson(weight_sq(k, x) * values ** 2, x=x))
        return h ** power * total

    def trace(k: int, points, power: int, derivative: bool, phase_k: Optional[int] = None) -> float:
        total = 0.0
        for x, normal in points:
            w, dw, _ = manufactured.evaluate(k, np.array([x]), model.L)
            value = normal * dw[0] if derivative else w[0]
            total += float(weight_sq(phase_k or k, np.array([x]))[0]) * value ** 2
        return h ** power * total

    lhs = {}
    for k in (1, 2):
        lhs[f"w{k}_interior"] = interior(k, 1, "w")
        lhs[f"dw{k}_interior"] = interior(k, 3, "dw")
        lhs[f"w{k}_gamma"] = trace(k, geometry.gamma, 1, False)
        # in 1-D the full gradient on γ is the normal derivative
        lhs[f"grad_w{k}_gamma"] = trace(k, geometry.gamma, 3, True)
        lhs[f"dn_w{k}_gamma"] = trace(k, geometry.gamma, 3, True)

    e1 = e2 = 0.0
    for x, normal in geometry.gamma:
        w1, dw1, _ = manufactured.evaluate(1, np.array([x]), model.L)
        w2, dw2, _ = manufactured.evaluate(2, np.array([x]), model.L)
        weight = float(weight_sq(1, np.array([x]))[0])
        e1 += weight * (w1[0] - w2[0]) ** 2
        e2 += weight * (normal * (dw1[0] - dw2[0])) ** 2

    rhs = {
        "f1_interior": interior(1, 4, "f"),
        "f2_interior": interior(2, 4, "f"),
        "w1_gamma1": trace(1, geometry.gamma1, 1, False),
        "dn_w1_gamma1": trace(1, geometry.gamma1, 3, True),
        "e1_gamma": h * e1,
        # tangential gradient of e₁ vanishes on a point interface
        "grad_e1_gamma": 0.0,
        "e2_gamma": h ** 3 * e2,
    }
    result = CarlemanRatio(h=float(h), lhs_terms=lhs, rhs_terms=rhs, log_scale=2.0 * peak / h,
                           ball_radius=geometry.gamma1[1][0] - model.damping.m)
    logger.info(f"[OK] carleman h={h:g}: lhs={result.lhs:.6e}, rhs={result.rhs:.6e}, ratio={result.ratio:.6e}")
    return result


def ratio_sweep(model: TransmissionModel1D, pair: PhasePair1D, hs: Sequence[float],
                manufactured: Optional[ManufacturedPair] = None, **kwargs) -> List[CarlemanRatio]:
    return [carleman_ratio(model, pair, h, manufactured, **kwargs) for h in hs]


def ratio_spread(results: Sequence[CarlemanRatio]) -> float:
    """max/min of the nonzero ratios over a sweep."""
    ratios = [r.ratio for r in results if r.ratio > 0]
    return max(ratios) / min(ratios) if ratios else 0.0


def sweep_frame(results: Sequence[CarlemanRatio]) -> pd.DataFrame:
    return pd.DataFrame([r.to_row() for r in results])
