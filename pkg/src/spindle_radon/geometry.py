"""Spindle-torus geometry: frames, defining functions and surface quadrature.

A spindle torus with centre ``x0``, squared radius ``s`` and tube-centre
distance ``t`` (``s > t**2``) splits into an outer *apple* and an inner
*lemon*. Both are described through local coordinates
``x' = R(alpha, beta)^T (x - x0)``, the cylindrical radius
``g = sqrt(x'^2 + y'^2)`` and ``h = |x - x0|^2 + t^2``::

    psi_j = (g + (-1)^j t)^2 + z'^2 - s = h + 2 t (-1)^j g - s

with ``j = 1`` for the apple and ``j = 2`` for the lemon.

All point-wise functions accept arrays of shape ``(..., 3)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .errors import DegeneratePointError, InvalidParamsError

TWO_PI = 2.0 * np.pi

RegionPredicate = Callable[[np.ndarray], np.ndarray]


class SurfaceKind(enum.IntEnum):
    APPLE = 1
    LEMON = 2

    @property
    def sign(self) -> float:
        """The factor ``(-1)^j``: -1 for apples, +1 for lemons."""
        return -1.0 if self is SurfaceKind.APPLE else 1.0

    @classmethod
    def parse(cls, value) -> "SurfaceKind":
        if isinstance(value, SurfaceKind):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        key = str(value).strip().lower()
        if key in ("apple", "a", "j1", "1"):
            return cls.APPLE
        if key in ("lemon", "l", "j2", "2"):
            return cls.LEMON
        raise ValueError(f"unknown surface kind {value!r}")


# ---------------------------------------------------------------------------
# rotation frame
# ---------------------------------------------------------------------------

def frame_rows(alpha, beta):
    """Rows ``r1, r2, r3`` of ``R(alpha, beta)^T`` stacked as ``(..., 3, 3)``."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    zero = np.zeros(np.broadcast(ca, cb).shape)
    r1 = np.stack(np.broadcast_arrays(ca, sa, zero), axis=-1)
    r2 = np.stack(np.broadcast_arrays(-sa * cb, ca * cb, sb), axis=-1)
    r3 = np.stack(np.broadcast_arrays(sa * sb, -ca * sb, cb), axis=-1)
    return np.stack([r1, r2, r3], axis=-2)


def frame_row_derivatives(alpha, beta):
    """Return ``(r1_alpha, r2_alpha, r1_beta, r2_beta)``, each ``(..., 3)``."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    zero = np.zeros(np.broadcast(ca, cb).shape)
    r1a = np.stack(np.broadcast_arrays(-sa, ca, zero), axis=-1)
    r2a = np.stack(np.broadcast_arrays(-ca * cb, -sa * cb, zero), axis=-1)
    r1b = np.stack(np.broadcast_arrays(zero, zero, zero), axis=-1)
    r2b = np.stack(np.broadcast_arrays(sa * sb, -ca * sb, cb), axis=-1)
    return r1a, r2a, r1b, r2b


@dataclass(frozen=True)
class LocalFrame:
    """Rotation ``R = R_z(alpha) R_x(beta)`` with the derived row data.

    ``A = r1^T r1 + r2^T r2`` is the orthogonal projector onto the plane
    perpendicular to the axis of revolution ``R e3 = r3^T``.
    """

    R: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    r3: np.ndarray
    r1_alpha: np.ndarray
    r2_alpha: np.ndarray
    r1_beta: np.ndarray
    r2_beta: np.ndarray
    A: np.ndarray

    @property
    def axis(self) -> np.ndarray:
        return self.R[:, 2]


def rotation_matrix(alpha: float, beta: float) -> LocalFrame:
    alpha = float(alpha) % TWO_PI
    beta = float(beta)
    rows = frame_rows(alpha, beta)
    r1a, r2a, r1b, r2b = frame_row_derivatives(alpha, beta)
    r1, r2, r3 = rows
    A = np.outer(r1, r1) + np.outer(r2, r2)
    return LocalFrame(
        R=rows.T.copy(), r1=r1, r2=r2, r3=r3,
        r1_alpha=r1a, r2_alpha=r2a, r1_beta=r1b, r2_beta=r2b, A=A,
    )


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TorusParams:
    """Full seven-dimensional spindle-torus parameters plus surface kind.

    ``alpha`` is reduced mod 2*pi and ``beta`` clamped to ``[0, pi/2]``.
    Validity (``s > t**2 > 0``) is checked by the operations that need it,
    so that predicates such as :func:`in_parameter_set_Y` can be evaluated on
    any input.
    """

    s: float
    t: float
    x0: tuple = (0.0, 0.0, 0.0)
    alpha: float = 0.0
    beta: float = 0.0
    kind: SurfaceKind = SurfaceKind.APPLE

    def __post_init__(self):
        x0 = tuple(float(v) for v in np.asarray(self.x0, dtype=float).reshape(3))
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "alpha", float(self.alpha) % TWO_PI)
        object.__setattr__(self, "beta", float(np.clip(float(self.beta), 0.0, np.pi / 2)))
        object.__setattr__(self, "kind", SurfaceKind.parse(self.kind))

    @property
    def center(self) -> np.ndarray:
        return np.array(self.x0)

    @cached_property
    def frame(self) -> LocalFrame:
        return rotation_matrix(self.alpha, self.beta)

    @property
    def sign(self) -> float:
        return self.kind.sign

    def with_kind(self, kind) -> "TorusParams":
        return TorusParams(self.s, self.t, self.x0, self.alpha, self.beta, kind)

    def validate(self, index=None) -> "TorusParams":
        if not (np.isfinite(self.s) and np.isfinite(self.t) and np.all(np.isfinite(self.x0))):
            raise InvalidParamsError("non-finite torus parameters", index)
        if self.t <= 0.0:
            raise InvalidParamsError(f"t must be positive, got t={self.t}", index)
        if self.s <= self.t ** 2:
            raise InvalidParamsError(f"need s > t^2, got s={self.s}, t={self.t}", index)
        return self


@dataclass(frozen=True)
class QuadratureSpec:
    n_psi: int = 64
    n_theta: int = 64

    def __post_init__(self):
        if int(self.n_psi) < 2 or int(self.n_theta) < 2:
            raise ValueError("quadrature needs n_psi >= 2 and n_theta >= 2")
        object.__setattr__(self, "n_psi", int(self.n_psi))
        object.__setattr__(self, "n_theta", int(self.n_theta))

    @classmethod
    def parse(cls, text: str) -> "QuadratureSpec":
        n_psi, n_theta = (int(v) for v in str(text).split(","))
        return cls(n_psi, n_theta)


# ---------------------------------------------------------------------------
# pointwise fields
# ---------------------------------------------------------------------------

def local_coordinates(x0, rows, x):
    """``(x_T, x')`` with ``x_T = x - x0`` and ``x' = R^T x_T``."""
    xT = np.asarray(x, dtype=float) - np.asarray(x0, dtype=float)
    xp = np.einsum("...ij,...j->...i", rows, xT)
    return xT, xp


def _scalar_fields_raw(t, x0, rows, x):
    xT, xp = local_coordinates(x0, rows, x)
    g = np.hypot(xp[..., 0], xp[..., 1])
    h = np.einsum("...i,...i->...", xT, xT) + np.asarray(t, dtype=float) ** 2
    return g, h, xT, xp


def _require_off_axis(g):
    if np.any(g == 0.0):
        raise DegeneratePointError("point on the directional axis (g = 0)")


def scalar_fields(params: TorusParams, x):
    """Return ``(g, h)``; ``g = 0`` is a valid return value."""
    g, h, _, _ = _scalar_fields_raw(params.t, params.center, frame_rows(params.alpha, params.beta), x)
    return g, h


def psi_raw(sign, s, t, x0, alpha, beta, x):
    """Vectorised defining function over parameters and points (expanded form)."""
    g, h, _, _ = _scalar_fields_raw(t, x0, frame_rows(alpha, beta), x)
    _require_off_axis(g)
    return h + 2.0 * np.asarray(t) * np.asarray(sign) * g - np.asarray(s)


def psi(params: TorusParams, x):
    """Defining function ``h + 2 t (-1)^j g - s`` of the apple or lemon."""
    return psi_raw(params.sign, params.s, params.t, params.center, params.alpha, params.beta, x)


def psi_squared_form(params: TorusParams, x):
    """The same function written as ``(g + (-1)^j t)^2 + z'^2 - s``."""
    g, _, _, xp = _scalar_fields_raw(params.t, params.center, frame_rows(params.alpha, params.beta), x)
    _require_off_axis(g)
    return (g + params.sign * params.t) ** 2 + xp[..., 2] ** 2 - params.s


def grad_psi_raw(sign, t, x0, alpha, beta, x):
    rows = frame_rows(alpha, beta)
    g, _, xT, xp = _scalar_fields_raw(t, x0, rows, x)
    _require_off_axis(g)
    # A x_T = r1 x' + r2 y'
    AxT = xp[..., 0:1] * rows[..., 0, :] + xp[..., 1:2] * rows[..., 1, :]
    coef = (np.asarray(sign) * np.asarray(t) / g)[..., None]
    return 2.0 * (xT + coef * AxT)


def grad_psi(params: TorusParams, x):
    """Closed-form gradient ``2 (I -+ (t/g) A) x_T`` (minus for apples)."""
    return grad_psi_raw(params.sign, params.t, params.center, params.alpha, params.beta, x)


def singular_points(params: TorusParams):
    params.validate()
    offset = np.sqrt(params.s - params.t ** 2) * params.frame.axis
    return params.center + offset, params.center - offset


def in_parameter_set_Y(params: TorusParams) -> bool:
    """True iff ``s > t^2 > 0`` and both singular points avoid the closed unit ball."""
    try:
        params.validate()
    except InvalidParamsError:
        return False
    return all(np.linalg.norm(p) > 1.0 for p in singular_points(params))


# ---------------------------------------------------------------------------
# surface quadrature
# ---------------------------------------------------------------------------

def generator_half_angle(sign, s, t):
    """Half-range of the generator angle: ``arccos(sign * t / sqrt(s))``."""
    return np.arccos(np.asarray(sign) * np.asarray(t) / np.sqrt(s))


def surface_area(params: TorusParams) -> float:
    """Exact area of the full apple or lemon (surface of revolution)."""
    params.validate()
    s, t = params.s, params.t
    if params.kind is SurfaceKind.APPLE:
        return 4 * np.pi * np.sqrt(s) * (t * np.arccos(-t / np.sqrt(s)) + np.sqrt(s - t * t))
    return 4 * np.pi * np.sqrt(s) * (np.sqrt(s - t * t) - t * np.arccos(t / np.sqrt(s)))


@dataclass(frozen=True)
class SurfacePoint:
    x: np.ndarray
    xT: np.ndarray
    x_prime: np.ndarray
    theta: float
    psi: float
    weight: float


@dataclass
class SurfaceQuadrature:
    """Quadrature nodes on one surface, stored as parallel arrays."""

    points: np.ndarray
    weights: np.ndarray
    psi: np.ndarray
    theta: np.ndarray
    x_prime: np.ndarray
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __len__(self):
        return len(self.weights)

    def __getitem__(self, i) -> SurfacePoint:
        return SurfacePoint(
            x=self.points[i], xT=self.points[i] - self.center, x_prime=self.x_prime[i],
            theta=float(self.theta[i]), psi=float(self.psi[i]), weight=float(self.weights[i]),
        )

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    def integrate(self, f) -> float:
        """Integrate a callable ``f(points) -> values`` over the weighted nodes."""
        live = self.weights != 0.0
        if not np.any(live):
            return 0.0
        vals = np.asarray(f(self.points[live]), dtype=float)
        return float(np.dot(self.weights[live], vals))


def parametrize_surface(params: TorusParams, quad: QuadratureSpec = QuadratureSpec(),
                        clip: Optional[RegionPredicate] = None) -> SurfaceQuadrature:
    """Trapezoid (generator angle) x midpoint (revolution angle) nodes.

    The generator circle is ``rho(psi) = t + sqrt(s) cos psi`` for apples and
    ``sqrt(s) cos psi - t`` for lemons, restricted to ``rho >= 0``. Weights are the Euclidean area
    element ``sqrt(s) rho dpsi dtheta`` and are zeroed where ``clip`` is false.
    Both generator endpoints are the singular points (``rho = 0``).
    """
    params.validate()
    s, t, sign = params.s, params.t, params.sign
    root_s = np.sqrt(s)
    half = float(generator_half_angle(sign, s, t))
    psi_nodes = np.linspace(-half, half, quad.n_psi)
    dpsi = 2.0 * half / (quad.n_psi - 1)
    trap = np.ones(quad.n_psi)
    trap[0] = trap[-1] = 0.5
    rho = root_s * np.cos(psi_nodes) - sign * t
    rho[0] = rho[-1] = 0.0
    rho = np.maximum(rho, 0.0)
    dtheta = TWO_PI / quad.n_theta
    theta_nodes = (np.arange(quad.n_theta) + 0.5) * dtheta

    P, T = np.meshgrid(psi_nodes, theta_nodes, indexing="ij")
    rho2 = np.broadcast_to(rho[:, None], P.shape)
    x_local = np.stack([rho2 * np.cos(T), rho2 * np.sin(T), root_s * np.sin(P)], axis=-1).reshape(-1, 3)
    weights = (root_s * rho * dpsi * trap)[:, None] * dtheta
    weights = np.broadcast_to(weights, P.shape).reshape(-1).copy()
    points = params.center + x_local @ params.frame.R.T
    if clip is not None:
        weights[~np.asarray(clip(points), dtype=bool)] = 0.0
    return SurfaceQuadrature(points=points, weights=weights, psi=P.reshape(-1),
                             theta=T.reshape(-1), x_prime=x_local, center=params.center)
