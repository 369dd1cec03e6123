"""
Closed-form scalar phases on the plane with exact first and second derivatives.

Every phase evaluates on an (N, 2) array of points and returns
(value (N,), gradient (N, 2), hessian (N, 2, 2)). Phases combine with + and
scalar *, so weight recipes are small expression trees.
"""
from typing import Sequence, Tuple

import numpy as np

Evaluation = Tuple[np.ndarray, np.ndarray, np.ndarray]


def _points(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=float))


class Phase:
    """Base class; subclasses implement evaluate()."""

    def evaluate(self, x: np.ndarray) -> Evaluation:
        raise NotImplementedError

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x)[0]

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x)[1]

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x)[2]

    def __add__(self, other: "Phase") -> "Phase":
        return SumPhase([self, other])

    def __mul__(self, factor: float) -> "Phase":
        return ScaledPhase(self, factor)

    __rmul__ = __mul__


class SumPhase(Phase):
    def __init__(self, terms: Sequence[Phase]):
        flat = []
        for term in terms:
            flat.extend(term.terms if isinstance(term, SumPhase) else [term])
        self.terms = flat

    def evaluate(self, x):
        parts = [term.evaluate(x) for term in self.terms]
        return tuple(sum(p[i] for p in parts) for i in range(3))


class ScaledPhase(Phase):
    def __init__(self, base: Phase, factor: float):
        self.base = base
        self.factor = float(factor)

    def evaluate(self, x):
        v, g, h = self.base.evaluate(x)
        return self.factor * v, self.factor * g, self.factor * h


class LinearPhase(Phase):
    """ψ(x) = d·x + b."""

    def __init__(self, direction: Sequence[float], offset: float = 0.0):
        self.direction = np.asarray(direction, dtype=float)
        self.offset = float(offset)

    def evaluate(self, x):
        x = _points(x)
        n = x.shape[0]
        return (x @ self.direction + self.offset,
                np.tile(self.direction, (n, 1)),
                np.zeros((n, 2, 2)))


class SquaredNorm(Phase):
    """ψ(x) = |x - c|²."""

    def __init__(self, center: Sequence[float] = (0.0, 0.0)):
        self.center = np.asarray(center, dtype=float)

    def evaluate(self, x):
        d = _points(x) - self.center
        n = d.shape[0]
        return np.sum(d * d, axis=1), 2.0 * d, np.tile(2.0 * np.eye(2), (n, 1, 1))


class RadialDistance(Phase):
    """ψ(x) = |x - c|; smooth away from c."""

    def __init__(self, center: Sequence[float] = (0.0, 0.0)):
        self.center = np.asarray(center, dtype=float)

    def evaluate(self, x):
        d = _points(x) - self.center
        r = np.linalg.norm(d, axis=1)
        unit = d / r[:, None]
        hess = (np.eye(2)[None, :, :] - unit[:, :, None] * unit[:, None, :]) / r[:, None, None]
        return r, unit, hess


class QuadraticPhase(Phase):
    """ψ(x) = ½xᵀHx + b·x (H symmetric)."""

    def __init__(self, matrix: np.ndarray, vector: Sequence[float]):
        matrix = np.asarray(matrix, dtype=float)
        self.matrix = 0.5 * (matrix + matrix.T)
        self.vector = np.asarray(vector, dtype=float)

    def evaluate(self, x):
        x = _points(x)
        hx = x @ self.matrix
        n = x.shape[0]
        return 0.5 * np.sum(x * hx, axis=1) + x @ self.vector, hx + self.vector, np.tile(self.matrix, (n, 1, 1))


class GaussianDip(Phase):
    """
    ψ(x) = -depth·exp(-½ dᵀQd), d = x - center,
    Q = R diag(1/s_along², 1/s_across²) Rᵀ with R the rotation by `angle`.

    Added to an increasing field it creates one saddle and one local minimum on the
    `angle` axis when depth/s_along > e^{1/2} times the field slope.
    """

    def __init__(self, center: Sequence[float], depth: float, s_along: float, s_across: float,
                 angle: float = 0.0):
        self.center = np.asarray(center, dtype=float)
        self.depth = float(depth)
        self.s_along = float(s_along)
        self.s_across = float(s_across)
        self.angle = float(angle)
        rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        self.Q = rot @ np.diag([1.0 / s_along ** 2, 1.0 / s_across ** 2]) @ rot.T

    def evaluate(self, x):
        d = _points(x) - self.center
        qd = d @ self.Q
        e = np.exp(-0.5 * np.sum(d * qd, axis=1))
        value = -self.depth * e
        grad = self.depth * e[:, None] * qd
        hess = self.depth * e[:, None, None] * (self.Q[None, :, :] - qd[:, :, None] * qd[:, None, :])
        return value, grad, hess


def septic_step(u: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """C³ step 35u⁴ - 84u⁵ + 70u⁶ - 20u⁷ on [0, 1] and its first two derivatives."""
    u = np.clip(u, 0.0, 1.0)
    value = u ** 4 * (35.0 - 84.0 * u + 70.0 * u ** 2 - 20.0 * u ** 3)
    first = 140.0 * u ** 3 * (1.0 - u) ** 3
    second = 420.0 * u ** 2 * (1.0 - u) ** 2 * (1.0 - 2.0 * u)
    return value, first, second


def _cutoff(t: np.ndarray, core: float, taper: float):
    """1 for |t| <= core, 0 for |t| >= core + taper; returns χ, χ', χ''."""
    value, first, second = septic_step((core + taper - np.abs(t)) / taper)
    return value, -np.sign(t) * first / taper, second / taper ** 2


class TubeField:
    """
    Constant velocity `length`·e inside a rectangle around a straight arc,
    cut off smoothly to zero over `taper`. The rectangle is centred at `center`
    with half-sizes core_axial (along e) and core_radial (across e).
    """

    def __init__(self, center: Sequence[float], direction: Sequence[float], length: float,
                 core_axial: float, core_radial: float, taper: float):
        self.center = np.asarray(center, dtype=float)
        direction = np.asarray(direction, dtype=float)
        self.direction = direction / np.linalg.norm(direction)
        self.normal = np.array([-self.direction[1], self.direction[0]])
        self.length = float(length)
        self.core_axial = float(core_axial)
        self.core_radial = float(core_radial)
        self.taper = float(taper)

    @property
    def velocity(self) -> np.ndarray:
        return self.length * self.direction

    @property
    def half_extents(self) -> Tuple[float, float]:
        return self.core_axial + self.taper, self.core_radial + self.taper

    def support_corners(self) -> np.ndarray:
        ha, hr = self.half_extents
        signs = np.array([[1, 1], [1, -1], [-1, -1], [-1, 1]], dtype=float)
        return self.center + signs[:, :1] * ha * self.direction + signs[:, 1:] * hr * self.normal

    def in_support(self, x: np.ndarray) -> np.ndarray:
        d = _points(x) - self.center
        ha, hr = self.half_extents
        return (np.abs(d @ self.direction) < ha) & (np.abs(d @ self.normal) < hr)

    def bump(self, x: np.ndarray):
        """β, ∇β (N, 2) and β'' (N, 2, 2) of the tube cutoff."""
        d = _points(x) - self.center
        e, n = self.direction, self.normal
        ca, ca1, ca2 = _cutoff(d @ e, self.core_axial, self.taper)
        cr, cr1, cr2 = _cutoff(d @ n, self.core_radial, self.taper)
        ee, nn, en = np.outer(e, e), np.outer(n, n), np.outer(e, n) + np.outer(n, e)
        value = ca * cr
        grad = (ca1 * cr)[:, None] * e + (ca * cr1)[:, None] * n
        hess = ((ca2 * cr)[:, None, None] * ee + (ca1 * cr1)[:, None, None] * en
                + (ca * cr2)[:, None, None] * nn)
        return value, grad, hess


class FlowMap:
    """
    Time-1 map of x' = Σ_tubes velocity·β(x) by fixed-step RK4.

    The Jacobian J and second derivatives H (H[k, i, j] = ∂²φ_k/∂x_i∂x_j) are
    integrated alongside, so they are the exact derivatives of the discrete map.
    Points outside every tube never move.
    """

    def __init__(self, tubes: Sequence[TubeField], steps: int = 64):
        self.tubes = list(tubes)
        self.steps = int(steps)

    def _field(self, x: np.ndarray):
        n = x.shape[0]
        vel = np.zeros((n, 2))
        jac = np.zeros((n, 2, 2))
        second = np.zeros((n, 2, 2, 2))
        for tube in self.tubes:
            b, gb, hb = tube.bump(x)
            v = tube.velocity
            vel += b[:, None] * v
            jac += v[None, :, None] * gb[:, None, :]
            second += v[None, :, None, None] * hb[:, None, :, :]
        return vel, jac, second

    def _rhs(self, x, J, H):
        vel, jac, second = self._field(x)
        dJ = np.einsum("nkl,nlj->nkj", jac, J)
        dH = (np.einsum("nkl,nlij->nkij", jac, H)
              + np.einsum("nklm,nli,nmj->nkij", second, J, J))
        return vel, dJ, dH

    def __call__(self, x: np.ndarray):
        x = _points(x)
        n = x.shape[0]
        y = x.copy()
        J = np.tile(np.eye(2), (n, 1, 1))
        H = np.zeros((n, 2, 2, 2))
        if not self.tubes:
            return y, J, H
        active = np.zeros(n, dtype=bool)
        for tube in self.tubes:
            active |= tube.in_support(x)
        if not active.any():
            return y, J, H

        ya, Ja, Ha = y[active], J[active], H[active]
        dt = 1.0 / self.steps
        for _ in range(self.steps):
            k1 = self._rhs(ya, Ja, Ha)
            k2 = self._rhs(ya + 0.5 * dt * k1[0], Ja + 0.5 * dt * k1[1], Ha + 0.5 * dt * k1[2])
            k3 = self._rhs(ya + 0.5 * dt * k2[0], Ja + 0.5 * dt * k2[1], Ha + 0.5 * dt * k2[2])
            k4 = self._rhs(ya + dt * k3[0], Ja + dt * k3[1], Ha + dt * k3[2])
            ya = ya + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            Ja = Ja + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            Ha = Ha + dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        y[active], J[active], H[active] = ya, Ja, Ha
        return y, J, H


class FlowComposedPhase(Phase):
    """ψ₂ = ψ₁∘φ with φ a FlowMap; derivatives by the chain rule."""

    def __init__(self, base: Phase, flow: FlowMap):
        self.base = base
        self.flow = flow

    def evaluate(self, x):
        y, J, H = self.flow(x)
        value, grad, hess = self.base.evaluate(y)
        grad2 = np.einsum("nki,nk->ni", J, grad)
        hess2 = (np.einsum("nki,nkl,nlj->nij", J, hess, J)
                 + np.einsum("nk,nkij->nij", grad, H))
        return value, grad2, hess2
