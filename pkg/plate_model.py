"""
Transmission plate geometry, material speeds and Kelvin-Voigt damping profile.

Main components:
    - DampingProfile: localized damping coefficient a(x)
    - TransmissionModel1D: Ω=(0,L) split into the damped material Ω₁=(a_if,b_if)
      and the undamped material Ω₂=(0,a_if)∪(b_if,L)
    - AnnularDomain2D: disc with an off-centre hole, used by the weight construction
    - make_model / eval_damping: config ingestion and damping evaluation

All objects are immutable and safe to share across worker threads.
"""
import logging
from dataclasses import dataclass, asdict, field
from typing import Any, Dict, Mapping, Tuple

import numpy as np

from lab_errors import ModelConfigError

logger = logging.getLogger(__name__)

DAMPING_SHAPES = ("smooth-bump", "plateau-bump", "none")

DEFAULT_MODEL: Dict[str, Any] = {
    "L": 1.0,
    "a_if": 0.3,
    "b_if": 0.7,
    "c1": 1.0,
    "c2": 1.0,
    "damping": {"m": 0.5, "w": 0.1, "a_max": 1.0, "shape": "smooth-bump"},
}


def smooth_step(t: np.ndarray) -> np.ndarray:
    """C∞ transition: 0 for t ≤ 0, 1 for t ≥ 1."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        left = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        right = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return left / (left + right)


@dataclass(frozen=True)
class DampingProfile:
    """
    Damping coefficient a(x) supported in [m-w, m+w].

    smooth-bump:  a(x) = a_max * exp(1 - 1/(1 - s²)),  s = (x-m)/w, |s| < 1
    plateau-bump: a(x) = a_max for |s| ≤ 1/2, then a_max * smooth_step(2(1-|s|))
    none:         a(x) = 0
    Both bumps vanish identically for |s| ≥ 1 and satisfy a ≥ a_max/2 on |s| ≤ 1/2
    (exp(-1/3) ≈ 0.717 for the smooth bump).
    """
    m: float = 0.5
    w: float = 0.1
    a_max: float = 1.0
    shape: str = "smooth-bump"

    @property
    def is_damped(self) -> bool:
        return self.shape != "none"

    @property
    def support(self) -> Tuple[float, float]:
        return (self.m - self.w, self.m + self.w)

    def values(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.is_damped:
            return np.zeros_like(x)
        s = (x - self.m) / self.w
        inside = np.abs(s) < 1.0
        out = np.zeros_like(x)
        if self.shape == "smooth-bump":
            s_in = s[inside]
            out[inside] = self.a_max * np.exp(1.0 - 1.0 / (1.0 - s_in * s_in))
        else:
            out[inside] = self.a_max * smooth_step(2.0 * (1.0 - np.abs(s[inside])))
        return out


@dataclass(frozen=True)
class TransmissionModel1D:
    L: float = 1.0
    a_if: float = 0.3
    b_if: float = 0.7
    c1: float = 1.0
    c2: float = 1.0
    damping: DampingProfile = field(default_factory=DampingProfile)

    def speed(self, x: np.ndarray) -> np.ndarray:
        """Material speed c(x): c1 on Ω₁, c2 on Ω₂ (interfaces get c2)."""
        x = np.asarray(x, dtype=float)
        return np.where((x > self.a_if) & (x < self.b_if), self.c1, self.c2)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class AnnularDomain2D:
    """Disc of radius R centred at the origin with the open ball B(hole_center, r) removed."""
    outer_radius: float = 1.0
    hole_center: Tuple[float, float] = (0.0, 0.0)
    hole_radius: float = 0.2

    def __post_init__(self):
        if self.outer_radius <= 0 or self.hole_radius <= 0:
            raise ModelConfigError("annulus: radii must be > 0")
        if float(np.hypot(*self.hole_center)) + self.hole_radius >= self.outer_radius:
            raise ModelConfigError(
                f"annulus: hole |c|+r={np.hypot(*self.hole_center) + self.hole_radius:.4g} "
                f"must be < R={self.outer_radius}"
            )

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.hole_center, dtype=float)

    def boundary_distance(self, points: np.ndarray) -> np.ndarray:
        """Signed distance to the nearest boundary piece, positive inside."""
        points = np.atleast_2d(points)
        to_outer = self.outer_radius - np.linalg.norm(points, axis=-1)
        to_hole = np.linalg.norm(points - self.center, axis=-1) - self.hole_radius
        return np.minimum(to_outer, to_hole)

    def contains(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        return self.boundary_distance(points) > margin

    def outer_boundary(self, n: int) -> Tuple[np.ndarray, np.ndarray]:
        """Points on |x|=R and the outward unit normals."""
        theta = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        normals = np.column_stack([np.cos(theta), np.sin(theta)])
        return self.outer_radius * normals, normals

    def hole_boundary(self, n: int) -> Tuple[np.ndarray, np.ndarray]:
        """Points on the hole circle and the outward normals of the annulus (pointing into the hole)."""
        theta = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        radial = np.column_stack([np.cos(theta), np.sin(theta)])
        return self.center + self.hole_radius * radial, -radial

    def sample_grid(self, n_side: int, margin: float = 0.0) -> np.ndarray:
        """Tensor grid over the bounding box, restricted to the domain."""
        axis = np.linspace(-self.outer_radius, self.outer_radius, n_side)
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        points = np.column_stack([xx.ravel(), yy.ravel()])
        return points[self.contains(points, margin)]


def _as_float(section: Mapping[str, Any], key: str, prefix: str) -> float:
    try:
        return float(section[key])
    except (TypeError, ValueError):
        raise ModelConfigError(f"{prefix}{key}: expected a number, got {section[key]!r}")


def make_model(config: Mapping[str, Any]) -> TransmissionModel1D:
    """
    Build and validate a TransmissionModel1D from a key-value map.

    Missing keys take the documented defaults (DEFAULT_MODEL).

    Args:
        config: {L, a_if, b_if, c1, c2, damping: {m, w, a_max, shape}}

    Returns:
        A validated, immutable model.

    Raises:
        ModelConfigError: unknown keys, bad speeds, bad geometry, or damping
            support touching an interface.

    Example:
        >>> make_model({"damping": {"shape": "none"}}).damping.is_damped
        False
    """
    config = dict(config or {})
    unknown = set(config) - set(DEFAULT_MODEL)
    if unknown:
        raise ModelConfigError(f"model.{sorted(unknown)[0]}: unknown key")
    damping_cfg = dict(DEFAULT_MODEL["damping"])
    raw_damping = config.get("damping") or {}
    unknown = set(raw_damping) - set(damping_cfg)
    if unknown:
        raise ModelConfigError(f"model.damping.{sorted(unknown)[0]}: unknown key")
    damping_cfg.update(raw_damping)
    merged = {**DEFAULT_MODEL, **config}

    L = _as_float(merged, "L", "model.")
    a_if = _as_float(merged, "a_if", "model.")
    b_if = _as_float(merged, "b_if", "model.")
    c1 = _as_float(merged, "c1", "model.")
    c2 = _as_float(merged, "c2", "model.")
    if L <= 0:
        raise ModelConfigError("model.L: must be > 0")
    if not 0.0 < a_if < b_if < L:
        raise ModelConfigError(f"model.a_if/b_if: need 0 < a_if < b_if < L, got {a_if}, {b_if}, {L}")
    if c1 <= 0:
        raise ModelConfigError(f"model.c1: must be > 0, got {c1}")
    if c2 <= 0:
        raise ModelConfigError(f"model.c2: must be > 0, got {c2}")

    shape = str(damping_cfg["shape"])
    if shape not in DAMPING_SHAPES:
        raise ModelConfigError(f"model.damping.shape: expected one of {DAMPING_SHAPES}, got {shape!r}")
    m = _as_float(damping_cfg, "m", "model.damping.")
    w = _as_float(damping_cfg, "w", "model.damping.")
    a_max = _as_float(damping_cfg, "a_max", "model.damping.")
    if shape != "none":
        if a_max <= 0:
            raise ModelConfigError(
                "model.damping.a_max: must be > 0 (request an undamped run with shape 'none')"
            )
        if w <= 0:
            raise ModelConfigError("model.damping.w: must be > 0")
        if not (m - w > a_if and m + w < b_if):
            raise ModelConfigError(
                f"model.damping: support [{m - w:.4g}, {m + w:.4g}] must lie strictly inside "
                f"({a_if}, {b_if})"
            )

    model = TransmissionModel1D(
        L=L, a_if=a_if, b_if=b_if, c1=c1, c2=c2,
        damping=DampingProfile(m=m, w=w, a_max=a_max, shape=shape),
    )
    logger.debug(f"[OK] model {model}")
    return model


def eval_damping(model: TransmissionModel1D, x: float) -> float:
    """a(x) at one position in [0, L]."""
    tol = 1e-12 * model.L
    if not (-tol <= x <= model.L + tol):
        raise ModelConfigError(f"eval_damping: x={x} outside [0, {model.L}]")
    return float(model.damping.values(np.array([x]))[0])
