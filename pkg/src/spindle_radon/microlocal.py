"""Phase derivatives, left projections, Jacobians and Bolker scans.

The phase of both transforms is ``Phi = sigma * Psi``. For the full family
the coordinates on the canonical relation are ``(t, x0, alpha, beta; x;
sigma)`` with ``s`` eliminated through ``Psi = 0``; for the translated family
they are ``(x0, y0; x; sigma)`` with ``p = h**2 / g``.

Two different ``g`` appear below. The full family uses the cylindrical
radius ``g = sqrt(x'^2 + y'^2)`` and ``h = |x_T|^2 + t^2``; the translated
family uses the *squared* planar distance ``g4 = (x-x0)^2 + (y-y0)^2`` and
``h = |x_T|^2 - 1``. They are kept under distinct names.

All sample containers are batched: every field carries a leading sample
axis, and scalars are promoted to length-one batches.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePointError, InvalidSampleError, UnsupportedFamilyError
from .fdiff import central_jacobian
from .geometry import (SurfaceKind, TorusParams, frame_row_derivatives, frame_rows)
from .transforms import RestrictedParams
from .volume import GridSpec


def _batch(v, width=None):
    a = np.asarray(v, dtype=float)
    if width is None:
        return np.atleast_1d(a)
    return a.reshape(-1, width) if a.ndim <= 1 else a


def _sign(kind) -> float:
    return SurfaceKind.parse(kind).sign


# ---------------------------------------------------------------------------
# full family
# ---------------------------------------------------------------------------

@dataclass
class CanonicalSampleFull:
    """Points ``(t, x0, alpha, beta; x; sigma)`` on the canonical relation."""

    sigma: np.ndarray
    t: np.ndarray
    x0: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        x0 = _batch(self.x0, 3)
        x = _batch(self.x, 3)
        scal = [_batch(v) for v in (self.sigma, self.t, self.alpha, self.beta)]
        n = max([len(x0), len(x)] + [len(v) for v in scal])
        self.sigma, self.t, self.alpha, self.beta = (np.broadcast_to(v, (n,)).copy() for v in scal)
        self.x0 = np.broadcast_to(x0, (n, 3)).copy()
        self.x = np.broadcast_to(x, (n, 3)).copy()

    def __len__(self):
        return len(self.sigma)

    VARIABLES = ("sigma", "t", "x0_1", "x0_2", "x0_3", "alpha", "beta", "x_1", "x_2", "x_3")

    def to_vector(self) -> np.ndarray:
        """Stack as ``(n, 10)`` in the order of :attr:`VARIABLES`."""
        return np.column_stack([self.sigma, self.t, self.x0, self.alpha, self.beta, self.x])

    @classmethod
    def from_vector(cls, v) -> "CanonicalSampleFull":
        v = np.atleast_2d(v)
        return cls(v[:, 0], v[:, 1], v[:, 2:5], v[:, 5], v[:, 6], v[:, 7:10])

    def take(self, idx) -> "CanonicalSampleFull":
        return CanonicalSampleFull(self.sigma[idx], self.t[idx], self.x0[idx], self.alpha[idx],
                                   self.beta[idx], self.x[idx])


@dataclass
class _FullFields:
    rows: np.ndarray
    xT: np.ndarray
    xp: np.ndarray
    g: np.ndarray
    h: np.ndarray
    AxT: np.ndarray


def _full_fields(c: CanonicalSampleFull) -> _FullFields:
    rows = frame_rows(c.alpha, c.beta)
    xT = c.x - c.x0
    xp = np.einsum("nij,nj->ni", rows, xT)
    g = np.hypot(xp[:, 0], xp[:, 1])
    if np.any(g == 0.0):
        raise DegeneratePointError("point on the directional axis (g = 0)")
    h = np.einsum("ni,ni->n", xT, xT) + c.t ** 2
    AxT = xp[:, 0:1] * rows[:, 0] + xp[:, 1:2] * rows[:, 1]
    return _FullFields(rows, xT, xp, g, h, AxT)


def _quadratic_forms(c: CanonicalSampleFull, f: _FullFields):
    """``Q_a = x_T^T (r1a^T r1 + r2a^T r2) x_T`` and the analogous ``Q_b``."""
    r1a, r2a, r1b, r2b = frame_row_derivatives(c.alpha, c.beta)
    dot = lambda a, b: np.einsum("ni,ni->n", a, b)
    Qa = dot(r1a, f.xT) * f.xp[:, 0] + dot(r2a, f.xT) * f.xp[:, 1]
    Qb = dot(r1b, f.xT) * f.xp[:, 0] + dot(r2b, f.xT) * f.xp[:, 1]
    return Qa, Qb


def s_from_sample(kind, c: CanonicalSampleFull) -> np.ndarray:
    """The squared radius fixed by ``Psi = 0``: ``h -+ 2 t g``."""
    f = _full_fields(c)
    return f.h + 2.0 * _sign(kind) * c.t * f.g


def phase_function_full(kind, sigma, s, t, x0, alpha, beta, x):
    """``sigma * Psi_j`` for batched arguments (used as the finite-difference oracle)."""
    rows = frame_rows(alpha, beta)
    xT = np.asarray(x, float) - np.asarray(x0, float)
    xp = np.einsum("...ij,...j->...i", rows, xT)
    g = np.hypot(xp[..., 0], xp[..., 1])
    h = np.einsum("...i,...i->...", xT, xT) + np.asarray(t) ** 2
    return np.asarray(sigma) * (h + 2.0 * _sign(kind) * np.asarray(t) * g - np.asarray(s))


@dataclass
class PhaseDerivatives:
    dS: np.ndarray
    dT: np.ndarray
    dAlpha: np.ndarray
    dBeta: np.ndarray
    gradX0: np.ndarray
    gradX: np.ndarray


def phase_derivatives_full(kind, c: CanonicalSampleFull) -> PhaseDerivatives:
    """Closed-form derivatives of ``sigma * Psi_j``.

    With ``e = -1`` (apple) or ``+1`` (lemon)::

        d_s = -sigma                      d_t = 2 sigma (t + e g)
        grad_x = 2 sigma (I + e (t/g) A) x_T = -grad_x0
        d_alpha = 2 e sigma (t/g) Q_alpha    d_beta = 2 e sigma (t/g) Q_beta

    where ``Q_* = x_T^T (r1*^T r1 + r2*^T r2) x_T``.
    """
    e = _sign(kind)
    f = _full_fields(c)
    Qa, Qb = _quadratic_forms(c, f)
    sig = c.sigma
    gradX = 2.0 * sig[:, None] * (f.xT + (e * c.t / f.g)[:, None] * f.AxT)
    return PhaseDerivatives(
        dS=-sig,
        dT=2.0 * sig * (c.t + e * f.g),
        dAlpha=2.0 * e * sig * c.t / f.g * Qa,
        dBeta=2.0 * e * sig * c.t / f.g * Qb,
        gradX0=-gradX,
        gradX=gradX,
    )


def left_projection_full(kind, c: CanonicalSampleFull) -> np.ndarray:
    """``(dS, t, alpha, beta, x0, grad_x0, dT, dAlpha, dBeta, s)``, shape ``(n, 14)``."""
    d = phase_derivatives_full(kind, c)
    s = s_from_sample(kind, c)
    return np.column_stack([d.dS, c.t, c.alpha, c.beta, c.x0, d.gradX0, d.dT, d.dAlpha, d.dBeta, s])


PROJECTION_DERIVATIVE_COLUMNS = (0, 7, 8, 9, 10, 11, 12)
PROJECTION_BASE_COLUMNS = (1, 2, 3, 4, 5, 6, 13)


def gradx0_jacobian(kind, c: CanonicalSampleFull) -> np.ndarray:
    """Analytic ``D_x grad_x0``: ``-2 sigma [I + e (t/g) A - e (t/g^3) (A x_T)(A x_T)^T]``."""
    e = _sign(kind)
    f = _full_fields(c)
    A = np.einsum("nki,nkj->nij", f.rows[:, :2], f.rows[:, :2])
    k = (e * c.t / f.g)[:, None, None]
    outer = np.einsum("ni,nj->nij", f.AxT, f.AxT) / (f.g ** 2)[:, None, None]
    return -2.0 * c.sigma[:, None, None] * (np.eye(3) + k * A - k * outer)


def det_gradx0_block(kind, c: CanonicalSampleFull) -> np.ndarray:
    """``-(2 sigma)^3 (1 -+ t/g)`` (minus for apples)."""
    f = _full_fields(c)
    return -(2.0 * c.sigma) ** 3 * (1.0 + _sign(kind) * c.t / f.g)


def plane_projector_factor(kind, c: CanonicalSampleFull):
    """Return ``(I + e (t/g) A, (1 + e t/g)^2)``: the matrix and its closed-form determinant."""
    e = _sign(kind)
    f = _full_fields(c)
    A = np.einsum("nki,nkj->nij", f.rows[:, :2], f.rows[:, :2])
    k = e * c.t / f.g
    return np.eye(3) + k[:, None, None] * A, (1.0 + k) ** 2


def amplitude_full(kind, c: CanonicalSampleFull) -> np.ndarray:
    """``|grad Psi_j| = 2 |(I + e (t/g) A) x_T|``."""
    e = _sign(kind)
    f = _full_fields(c)
    v = f.xT + (e * c.t / f.g)[:, None] * f.AxT
    return 2.0 * np.linalg.norm(v, axis=1)


# --- the cylinder g = t (apple) -------------------------------------------

@dataclass
class CylinderPoint:
    """``x = x0 + R (t cos(theta), t sin(theta), z)``."""

    theta: np.ndarray
    z: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        th, z, t = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, float)) for v in (self.theta, self.z, self.t)))
        if np.any(t <= 0):
            raise InvalidSampleError("cylinder radius t must be positive")
        self.theta, self.z, self.t = th.copy(), z.copy(), t.copy()

    def local(self) -> np.ndarray:
        return np.column_stack([self.t * np.cos(self.theta), self.t * np.sin(self.theta), self.z])


def cylinder_sample(sigma, x0, alpha, beta, cyl: CylinderPoint) -> CanonicalSampleFull:
    rows = frame_rows(np.broadcast_to(alpha, cyl.t.shape), np.broadcast_to(beta, cyl.t.shape))
    x = _batch(x0, 3) + np.einsum("nji,nj->ni", rows, cyl.local())
    return CanonicalSampleFull(sigma, cyl.t, x0, alpha, beta, x)


def _require_cylinder(c: CanonicalSampleFull, f: _FullFields, rtol=1e-9):
    if np.any(np.abs(f.g - c.t) > rtol * np.maximum(1.0, c.t)):
        raise InvalidSampleError("sample is not on the cylinder g = t")


def m_matrix_printed(c: CanonicalSampleFull) -> np.ndarray:
    """The 3x3 block with rows (d_t, d_alpha, s) against ``x``, assembled as printed.

    Row two differentiates ``x_T^T S x_T`` as ``2 S x_T`` with
    ``S = r1a^T r1 + r2a^T r2`` and uses the ``+2 sigma t/g`` prefactor. Its
    determinant is ``-16 sigma^2 z' t cos(beta)`` on ``g = t``; it is *not*
    the true Jacobian block (see :func:`m_matrix_true`).
    """
    f = _full_fields(c)
    _require_cylinder(c, f)
    r1a, r2a, _, _ = frame_row_derivatives(c.alpha, c.beta)
    SxT = r1a * f.xp[:, 0:1] + r2a * f.xp[:, 1:2]
    Qa, _ = _quadratic_forms(c, f)
    sig, t, g = c.sigma[:, None], c.t[:, None], f.g[:, None]
    row_t = -2.0 * sig / g * f.AxT
    row_a = 2.0 * sig * (2.0 * t / g * SxT - t / g ** 3 * Qa[:, None] * f.AxT)
    row_s = 2.0 * (f.xT - t / g * f.AxT)
    return np.stack([row_t, row_a, row_s], axis=1)


def det_M_cylinder(c: CanonicalSampleFull) -> np.ndarray:
    """Determinant of :func:`m_matrix_printed`; equals ``-16 sigma^2 z' t cos(beta)``."""
    return np.linalg.det(m_matrix_printed(c))


def det_M_cylinder_closed(c: CanonicalSampleFull) -> np.ndarray:
    f = _full_fields(c)
    return -16.0 * c.sigma ** 2 * f.xp[:, 2] * c.t * np.cos(c.beta)


def alpha_quadratic_form(c: CanonicalSampleFull) -> np.ndarray:
    """``Q_alpha``; on ``g = t`` it equals ``-t z' sin(beta) cos(theta)``."""
    f = _full_fields(c)
    return _quadratic_forms(c, f)[0]


def m_matrix_true(kind, c: CanonicalSampleFull, angle: str = "alpha") -> np.ndarray:
    """True ``x``-Jacobian of ``(d_t Phi, d_angle Phi, s)``; valid anywhere off the axis."""
    e = _sign(kind)
    f = _full_fields(c)
    r1a, r2a, r1b, r2b = frame_row_derivatives(c.alpha, c.beta)
    d1, d2 = (r1a, r2a) if angle == "alpha" else (r1b, r2b)
    Qa, Qb = _quadratic_forms(c, f)
    Q = Qa if angle == "alpha" else Qb
    dot = lambda a, b: np.einsum("ni,ni->n", a, b)
    # (S + S^T) x_T for S = d1^T r1 + d2^T r2
    sym = (d1 * f.xp[:, 0:1] + d2 * f.xp[:, 1:2]
           + f.rows[:, 0] * dot(d1, f.xT)[:, None] + f.rows[:, 1] * dot(d2, f.xT)[:, None])
    sig, t, g = c.sigma[:, None], c.t[:, None], f.g[:, None]
    row_t = 2.0 * e * sig / g * f.AxT
    row_a = 2.0 * e * sig * t * (sym / g - Q[:, None] * f.AxT / g ** 3)
    row_s = 2.0 * (f.xT + e * t / g * f.AxT)
    return np.stack([row_t, row_a, row_s], axis=1)


def cylinder_minors_closed(c: CanonicalSampleFull):
    """Closed forms of the true apple minors on ``g = t``.

    Returns ``(8 sigma^2 z'^2 sin(beta) sin(theta), 8 sigma^2 z'^2 cos(theta))``
    for the row sets ``(d_t, d_alpha, s)`` and ``(d_t, d_beta, s)``. They
    never vanish together when ``z' != 0`` and ``beta < pi/2``.
    """
    f = _full_fields(c)
    _require_cylinder(c, f)
    theta = np.arctan2(f.xp[:, 1], f.xp[:, 0])
    k = 8.0 * c.sigma ** 2 * f.xp[:, 2] ** 2
    return k * np.sin(c.beta) * np.sin(theta), k * np.cos(theta)


# ---------------------------------------------------------------------------
# translated family
# ---------------------------------------------------------------------------

@dataclass
class CanonicalSampleRestricted:
    sigma: np.ndarray
    x0: np.ndarray
    y0: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        x = _batch(self.x, 3)
        scal = [_batch(v) for v in (self.sigma, self.x0, self.y0)]
        n = max([len(x)] + [len(v) for v in scal])
        self.sigma, self.x0, self.y0 = (np.broadcast_to(v, (n,)).copy() for v in scal)
        self.x = np.broadcast_to(x, (n, 3)).copy()

    def __len__(self):
        return len(self.sigma)

    VARIABLES = ("sigma", "x0", "y0", "x", "y", "z")

    def to_vector(self) -> np.ndarray:
        return np.column_stack([self.sigma, self.x0, self.y0, self.x])

    @classmethod
    def from_vector(cls, v) -> "CanonicalSampleRestricted":
        v = np.atleast_2d(v)
        return cls(v[:, 0], v[:, 1], v[:, 2], v[:, 3:6])

    def take(self, idx) -> "CanonicalSampleRestricted":
        return CanonicalSampleRestricted(self.sigma[idx], self.x0[idx], self.y0[idx], self.x[idx])


@dataclass
class RestrictedFields:
    dx: np.ndarray
    dy: np.ndarray
    z: np.ndarray
    g4: np.ndarray
    h: np.ndarray
    u: np.ndarray


def restricted_fields(c: CanonicalSampleRestricted, check=True) -> RestrictedFields:
    dx = c.x[:, 0] - c.x0
    dy = c.x[:, 1] - c.y0
    z = c.x[:, 2]
    g4 = dx * dx + dy * dy
    if check and np.any(g4 == 0.0):
        raise DegeneratePointError("point on the directional axis (g = 0)")
    h = g4 + z * z - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        u = h / g4
    return RestrictedFields(dx, dy, z, g4, h, u)


def in_canonical_domain(kind, c: CanonicalSampleRestricted) -> np.ndarray:
    """Membership in the coordinate domain: ``z > 1`` (apple) or ``0 < z < 1`` (lemon)."""
    z = c.x[:, 2]
    if SurfaceKind.parse(kind) is SurfaceKind.APPLE:
        return z > 1.0
    return (z > 0.0) & (z < 1.0)


def phase_function_restricted(sigma, p, x0, y0, x):
    """``sigma * (p - h^2 / g4)``."""
    x = np.asarray(x, float)
    dx = x[..., 0] - np.asarray(x0)
    dy = x[..., 1] - np.asarray(y0)
    g4 = dx * dx + dy * dy
    h = g4 + x[..., 2] ** 2 - 1.0
    return np.asarray(sigma) * (np.asarray(p) - h * h / g4)


@dataclass
class RestrictedPhaseDerivatives:
    dP: np.ndarray
    dX0: np.ndarray
    dY0: np.ndarray
    gradX: np.ndarray


def phase_derivatives_restricted(c: CanonicalSampleRestricted) -> RestrictedPhaseDerivatives:
    f = restricted_fields(c)
    sig = c.sigma
    uu2 = f.u * (f.u - 2.0)
    gradX = -sig[:, None] * np.column_stack([
        -2.0 * uu2 * f.dx, -2.0 * uu2 * f.dy, 4.0 * f.u * f.z,
    ])
    return RestrictedPhaseDerivatives(
        dP=sig.copy(), dX0=-2.0 * sig * uu2 * f.dx, dY0=-2.0 * sig * uu2 * f.dy, gradX=gradX)


def restricted_projection(kind, c: CanonicalSampleRestricted) -> np.ndarray:
    """``(sigma, x0, y0, u h, -2 sigma u u2 (x - x0), -2 sigma u u2 (y - y0))``, shape ``(n, 6)``.

    The formula is the same for both kinds; ``kind`` only selects the domain
    the caller intends (see :func:`in_canonical_domain`).
    """
    SurfaceKind.parse(kind)
    f = restricted_fields(c)
    uu2 = f.u * (f.u - 2.0)
    return np.column_stack([c.sigma, c.x0, c.y0, f.u * f.h,
                            -2.0 * c.sigma * uu2 * f.dx, -2.0 * c.sigma * uu2 * f.dy])


def det_restricted_jacobian(kind, c: CanonicalSampleRestricted) -> np.ndarray:
    """``-16 z sigma^2 u^4 (u - 2)``."""
    SurfaceKind.parse(kind)
    f = restricted_fields(c)
    return -16.0 * f.z * c.sigma ** 2 * f.u ** 4 * (f.u - 2.0)


def restricted_det_scale(c: CanonicalSampleRestricted) -> np.ndarray:
    """Magnitude used to normalise the determinant: ``16 |z| sigma^2 u^4 (|u| + 2)``."""
    f = restricted_fields(c)
    return 16.0 * np.abs(f.z) * c.sigma ** 2 * f.u ** 4 * (np.abs(f.u) + 2.0)


def m3_matrix(c: CanonicalSampleRestricted) -> np.ndarray:
    f = restricted_fields(c)
    u1, u2 = f.u - 1.0, f.u - 2.0
    one = np.ones_like(f.u)
    rows = [
        [-f.dx * u2, -f.dy * u2, one],
        [4 * f.dx ** 2 * u1 ** 2 - f.h * u2, 4 * f.dx * f.dy * u1 ** 2, -2 * f.dx * u1],
        [4 * f.dx * f.dy * u1 ** 2, 4 * f.dy ** 2 * u1 ** 2 - f.h * u2, -2 * f.dy * u1],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=1)


def det_m3(c: CanonicalSampleRestricted) -> np.ndarray:
    """``-h^2 u (u - 2)``."""
    f = restricted_fields(c)
    return -f.h ** 2 * f.u * (f.u - 2.0)


def amplitude_restricted(c: CanonicalSampleRestricted) -> np.ndarray:
    """``|grad (p - h^2/g4)| = 2 |u| sqrt(g4 (u-2)^2 + 4 z^2)``."""
    f = restricted_fields(c)
    return 2.0 * np.abs(f.u) * np.sqrt(f.g4 * (f.u - 2.0) ** 2 + 4.0 * f.z ** 2)


def amplitude(params, x, kind=None) -> np.ndarray:
    """Surface-measure amplitude ``|grad Psi|`` at ``x`` for either family."""
    if isinstance(params, RestrictedParams):
        c = CanonicalSampleRestricted(1.0, params.x0, params.y0, x)
        return amplitude_restricted(c)
    kind = params.kind if kind is None else kind
    c = CanonicalSampleFull(1.0, params.t, params.center, params.alpha, params.beta, x)
    return amplitude_full(kind, c)


def sylvester_check(A, B):
    """``(det(I_m + A B), det(I_n + B A))`` for ``A`` (m x n) and ``B`` (n x m)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    m, n = A.shape
    if B.shape != (n, m):
        raise ValueError(f"shapes {A.shape} and {B.shape} do not pair")
    if max(m, n) > 6:
        raise ValueError("sylvester_check is limited to m, n <= 6")
    return float(np.linalg.det(np.eye(m) + A @ B)), float(np.linalg.det(np.eye(n) + B @ A))


# ---------------------------------------------------------------------------
# finite-difference Jacobians of the left projections
# ---------------------------------------------------------------------------

def full_projection_fd_jacobian(kind, c: CanonicalSampleFull, rel_step=1e-6) -> np.ndarray:
    """``(n, 14, 10)`` central-difference Jacobian with respect to :attr:`CanonicalSampleFull.VARIABLES`."""
    X = c.to_vector()
    steps = rel_step * np.maximum(1.0, np.abs(X))
    return central_jacobian(lambda V: left_projection_full(kind, CanonicalSampleFull.from_vector(V)), X, steps)


def restricted_projection_fd_jacobian(kind, c: CanonicalSampleRestricted, rel_step=1e-6) -> np.ndarray:
    X = c.to_vector()
    steps = rel_step * np.maximum(1.0, np.abs(X))
    return central_jacobian(lambda V: restricted_projection(kind, CanonicalSampleRestricted.from_vector(V)),
                            X, steps)


def gradx0_fd_jacobian(kind, c: CanonicalSampleFull, rel_step=1e-6) -> np.ndarray:
    def grad(V):
        cc = CanonicalSampleFull(c.sigma, c.t, c.x0, c.alpha, c.beta, V)
        return phase_derivatives_full(kind, cc).gradX0
    steps = rel_step * np.maximum(1.0, np.abs(c.x))
    return central_jacobian(grad, c.x, steps)


def m_matrix_fd(kind, c: CanonicalSampleFull, angle="alpha", rel_step=1e-6) -> np.ndarray:
    """Central-difference ``x``-Jacobian of ``(d_t Phi, d_angle Phi, s)``."""
    def rows(V):
        cc = CanonicalSampleFull(c.sigma, c.t, c.x0, c.alpha, c.beta, V)
        d = phase_derivatives_full(kind, cc)
        return np.column_stack([d.dT, d.dAlpha if angle == "alpha" else d.dBeta, s_from_sample(kind, cc)])
    steps = rel_step * np.maximum(1.0, np.abs(c.x))
    return central_jacobian(rows, c.x, steps)


# ---------------------------------------------------------------------------
# Bolker scans
# ---------------------------------------------------------------------------

class Family(enum.Enum):
    FULL_APPLE = "Full7D_Apple"
    FULL_LEMON = "Full7D_Lemon"
    RESTRICTED_APPLE = "Restricted_Apple"
    RESTRICTED_LEMON = "Restricted_Lemon"

    @classmethod
    def parse(cls, value) -> "Family":
        if isinstance(value, Family):
            return value
        key = str(value).strip().lower().replace("-", "_")
        for fam in cls:
            if key in (fam.value.lower(), fam.name.lower()):
                return fam
        raise UnsupportedFamilyError(f"unknown family {value!r}")

    @property
    def kind(self) -> SurfaceKind:
        return SurfaceKind.APPLE if self in (Family.FULL_APPLE, Family.RESTRICTED_APPLE) else SurfaceKind.LEMON

    @property
    def restricted(self) -> bool:
        return self in (Family.RESTRICTED_APPLE, Family.RESTRICTED_LEMON)


DEFAULT_REGION = {
    Family.RESTRICTED_LEMON: "z>0",
    Family.RESTRICTED_APPLE: "u>2",
    Family.FULL_APPLE: "valid",
    Family.FULL_LEMON: "valid",
}

REGIONS = {
    Family.RESTRICTED_LEMON: ("z>0", "z-sym"),
    Family.RESTRICTED_APPLE: ("u>2", "u=2"),
    Family.FULL_APPLE: ("valid", "cylinder"),
    Family.FULL_LEMON: ("valid",),
}


@dataclass
class BolkerReport:
    family: Family
    region: str
    n_samples: int
    immersion_metric: str
    min_immersion: float
    max_immersion: float
    threshold: float
    immersion_failures: int
    collisions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    reflection_pairs: int = 0

    @property
    def n_collisions(self) -> int:
        return int(len(self.collisions))

    @property
    def all_collisions_are_reflections(self) -> bool:
        return self.reflection_pairs == self.n_collisions

    @property
    def passed(self) -> bool:
        return self.immersion_failures == 0 and self.n_collisions == 0

    @property
    def expectation_met(self) -> bool:
        """Whether the scan shows what the region predicts.

        ``z-sym`` predicts reflection collisions only; ``u=2`` predicts a
        vanishing determinant (counted as failures when it does not vanish);
        every other region predicts an injective immersion.
        """
        if self.region == "z-sym":
            return self.immersion_failures == 0 and self.all_collisions_are_reflections
        if self.region == "u=2":
            return self.immersion_failures == 0
        return self.passed

    def to_text(self) -> str:
        lines = [
            f"family: {self.family.value}",
            f"region: {self.region}",
            f"samples: {self.n_samples}",
            f"immersion_metric: {self.immersion_metric}",
            f"min_immersion: {self.min_immersion:.17g}",
            f"max_immersion: {self.max_immersion:.17g}",
            f"threshold: {self.threshold:.17g}",
            f"immersion_failures: {self.immersion_failures}",
            f"collisions: {self.n_collisions}",
            f"reflection_pairs: {self.reflection_pairs}",
            f"expectation_met: {str(self.expectation_met).lower()}",
            "collision_pairs_csv:",
            "i,j,xi,yi,zi,xj,yj,zj",
        ]
        for i, j in self.collisions:
            a, b = self.points[i], self.points[j]
            lines.append(f"{i},{j}," + ",".join(f"{v:.17g}" for v in (*a, *b)))
        return "\n".join(lines) + "\n"


def find_collisions(outputs: np.ndarray, points: np.ndarray, groups=None, quantum=1e-7,
                    min_separation=1e-6) -> np.ndarray:
    """Index pairs whose projected outputs agree to a relative ``quantum``.

    Each column is compared at the scale ``max(|v|, m)`` where ``m`` is the
    column's median magnitude, so both large outputs (near the axis) and small
    ones are resolved to ``quantum``. Values are hashed through the monotone
    map ``sign(v) log1p(|v| / m)`` on a grid of cell ``quantum``, twice (the
    second grid shifted by half a cell) so that neighbours straddling a cell
    boundary are not missed. Candidates are confirmed componentwise and kept
    only if their preimages are distinct. ``groups`` restricts comparisons
    to samples with equal labels (e.g. the same base parameters).
    """
    outputs = np.asarray(outputs, dtype=float)
    n = len(outputs)
    if n < 2:
        return np.zeros((0, 2), dtype=np.int64)
    mag = np.median(np.abs(outputs), axis=0)
    mag = np.where(mag > 0, mag, 1.0)
    w = np.sign(outputs) * np.log1p(np.abs(outputs) / mag)
    labels = np.zeros(n, dtype=np.int64) if groups is None else np.asarray(groups, dtype=np.int64)
    found = set()
    for shift in (0.0, 0.5):
        keys = np.column_stack([labels, np.floor(w / quantum + shift).astype(np.int64)])
        _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        order = np.argsort(inverse, kind="stable")
        starts = np.concatenate([[0], np.cumsum(counts)])
        for b in np.flatnonzero(counts > 1):
            members = order[starts[b]:starts[b + 1]]
            for a_i in range(len(members)):
                for b_i in range(a_i + 1, len(members)):
                    i, j = sorted((int(members[a_i]), int(members[b_i])))
                    tol = quantum * np.maximum(mag, np.maximum(np.abs(outputs[i]), np.abs(outputs[j])))
                    if np.all(np.abs(outputs[i] - outputs[j]) <= tol) and \
                            np.linalg.norm(points[i] - points[j]) > min_separation:
                        found.add((i, j))
    if not found:
        return np.zeros((0, 2), dtype=np.int64)
    return np.array(sorted(found), dtype=np.int64)


def _symmetric_lattice(lo, hi, m):
    """``m`` points centred in ``[lo, hi]``, exactly symmetric about the midpoint when ``lo = -hi``."""
    step = (hi - lo) / m
    return (lo + hi) / 2 + (np.arange(m) - (m - 1) / 2) * step


def _restricted_lattice(family: Family, region: str, n_target: int, x0, y0):
    """Lattice points filling the region, grown until at least ``n_target`` survive."""
    m = max(4, int(np.ceil(n_target ** (1.0 / 3.0))))
    while True:
        m += m % 2  # even counts keep the axis (and z = 0) off the lattice
        if family is Family.RESTRICTED_LEMON:
            a = _symmetric_lattice(-1.0, 1.0, m)
            if region == "z>0":
                zs = _symmetric_lattice(-1.0, 1.0, 2 * m)[m:]
            else:
                zs = _symmetric_lattice(-1.0, 1.0, m)
            X, Y, Z = np.meshgrid(a + x0, a + y0, zs, indexing="ij")
            pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
            keep = (pts[:, 0] - x0) ** 2 + (pts[:, 1] - y0) ** 2 + pts[:, 2] ** 2 < 1.0
        else:
            a = _symmetric_lattice(-2.0, 2.0, m)
            zs = _symmetric_lattice(1.0, 4.0, m)
            X, Y, Z = np.meshgrid(a + x0, a + y0, zs, indexing="ij")
            pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
            rho2 = (pts[:, 0] - x0) ** 2 + (pts[:, 1] - y0) ** 2
            keep = (pts[:, 2] > 1.0) & ((pts[:, 2] ** 2 - 1.0) / rho2 >= 1.0 + APPLE_U_MARGIN)
        pts = pts[keep]
        if len(pts) >= n_target:
            return pts
        m = int(np.ceil(m * 1.25))


APPLE_U_MARGIN = 0.01
"""Apple scans over ``u > 2`` use the compact subset ``u >= 2 + APPLE_U_MARGIN``."""


def _hyperboloid_points(n, x0, y0, rng):
    rho = rng.uniform(0.05, 2.0, n)
    phi = rng.uniform(0.0, 2 * np.pi, n)
    return np.column_stack([x0 + rho * np.cos(phi), y0 + rho * np.sin(phi), np.sqrt(1.0 + rho * rho)])


def _scan_restricted(family, region, n, seed, sigma, x0, y0):
    rng = np.random.default_rng(seed)
    if region == "u=2":
        pts = _hyperboloid_points(n, x0, y0, rng)
    else:
        pts = _restricted_lattice(family, region, n, x0, y0)
    c = CanonicalSampleRestricted(sigma, x0, y0, pts)
    det = det_restricted_jacobian(family.kind, c)
    ratio = np.abs(det) / restricted_det_scale(c)
    if region == "u=2":
        threshold, failures = 1e-8, int(np.count_nonzero(ratio > 1e-8))
    elif family is Family.RESTRICTED_APPLE:
        threshold, failures = 1e-4, int(np.count_nonzero(ratio < 1e-4))
    else:
        threshold, failures = 0.0, int(np.count_nonzero(np.abs(det) <= 0.0))
    out = restricted_projection(family.kind, c)
    pairs = find_collisions(out, pts)
    refl = 0
    for i, j in pairs:
        a, b = pts[i], pts[j]
        if a[0] == b[0] and a[1] == b[1] and a[2] == -b[2]:
            refl += 1
    metric = "|det| / (16 |z| sigma^2 u^4 (|u| + 2))"
    return BolkerReport(family, region, len(pts), metric, float(ratio.min()), float(ratio.max()),
                        threshold, failures, pairs, pts, refl)


def _local_points(kind, t, rng, cylinder_fraction=0.0):
    """Frame coordinates ``x'`` for each ``t``; apple points stay outside the horn torus."""
    m = len(t)
    theta = rng.uniform(0.0, 2 * np.pi, m)
    rho = rng.uniform(0.2, 2.5, m)
    zp = rng.choice([-1.0, 1.0], m) * rng.uniform(0.2, 2.0, m)
    on_cyl = rng.uniform(size=m) < cylinder_fraction
    rho = np.where(on_cyl, t, rho)
    zp = np.where(on_cyl, np.sign(zp) * (1.1 * t + np.abs(zp)), zp)
    if SurfaceKind.parse(kind) is SurfaceKind.APPLE:
        inside = (rho - t) ** 2 + zp ** 2 <= 1.05 * t ** 2
        zp = np.where(inside, np.sign(zp) * (1.1 * t + np.abs(zp)), zp)
    return np.column_stack([rho * np.cos(theta), rho * np.sin(theta), zp])


def random_full_samples(kind, n, rng, cylinder_fraction=0.0) -> CanonicalSampleFull:
    """Random valid samples of the full family."""
    t = rng.uniform(0.3, 1.5, n)
    x0 = rng.uniform(-2.0, 2.0, (n, 3))
    alpha = rng.uniform(0.0, 2 * np.pi, n)
    beta = rng.uniform(0.1, np.pi / 2 - 0.1, n)
    sigma = rng.choice([-1.0, 1.0], n) * rng.uniform(0.5, 2.0, n)
    local = _local_points(kind, t, rng, cylinder_fraction)
    x = x0 + np.einsum("nji,nj->ni", frame_rows(alpha, beta), local)
    return CanonicalSampleFull(sigma, t, x0, alpha, beta, x)


def _full_partners(c: CanonicalSampleFull) -> CanonicalSampleFull:
    """Mirror each point through the torus equator (z' -> -z') and rotate it by pi about the axis."""
    rows = frame_rows(c.alpha, c.beta)
    xp = np.einsum("nij,nj->ni", rows, c.x - c.x0)
    mirror = xp * np.array([1.0, 1.0, -1.0])
    turn = xp * np.array([-1.0, -1.0, 1.0])
    xs = [c.x0 + np.einsum("nji,nj->ni", rows, v) for v in (mirror, turn)]
    return CanonicalSampleFull(np.tile(c.sigma, 2), np.tile(c.t, 2), np.tile(c.x0, (2, 1)),
                               np.tile(c.alpha, 2), np.tile(c.beta, 2), np.concatenate(xs))


def _scan_full(family, region, n, seed, n_bases=100):
    rng = np.random.default_rng(seed)
    frac = 1.0 if region == "cylinder" else (0.1 if family is Family.FULL_APPLE else 0.0)
    c = random_full_samples(family.kind, n, rng, cylinder_fraction=frac)
    J = full_projection_fd_jacobian(family.kind, c)
    sv = np.linalg.svd(J, compute_uv=False)
    ratio = sv[:, -1] / sv[:, 0]
    failures = int(np.count_nonzero(ratio < 1e-6))

    # injectivity: fixed base parameters, varying x, plus deliberate symmetric partners
    per = max(2, n // n_bases)
    base = random_full_samples(family.kind, n_bases, rng).take(np.repeat(np.arange(n_bases), per))
    local = _local_points(family.kind, base.t, rng, frac)
    x = base.x0 + np.einsum("nji,nj->ni", frame_rows(base.alpha, base.beta), local)
    cc = CanonicalSampleFull(base.sigma, base.t, base.x0, base.alpha, base.beta, x)
    allc = CanonicalSampleFull.from_vector(np.concatenate([cc.to_vector(), _full_partners(cc).to_vector()]))
    labels = np.tile(np.repeat(np.arange(n_bases), per), 3)
    out = left_projection_full(family.kind, allc)
    pairs = find_collisions(out, allc.x, groups=labels)
    metric = "sigma_min / sigma_max of the 14x10 central-difference Jacobian"
    return BolkerReport(family, region, len(c), metric, float(ratio.min()), float(ratio.max()),
                        1e-6, failures, pairs, allc.x, 0)


def bolker_scan(family, region=None, n_samples=100_000, seed=0, sigma=1.3, x0=0.1, y0=-0.2) -> BolkerReport:
    """Sample the immersion and injectivity parts of the Bolker condition.

    Translated families sample a lattice in the region (exactly symmetric
    in ``z`` for ``z-sym``) around fixed base parameters ``(x0, y0, sigma)``
    and use the closed-form determinant. Full families draw random samples,
    measure the conditioning of the finite-difference Jacobian, and search
    for output collisions among points sharing base parameters. A report of
    zero collisions is a statistical statement about the sampled set.
    """
    family = Family.parse(family)
    region = DEFAULT_REGION[family] if region is None else str(region)
    if region not in REGIONS[family]:
        raise UnsupportedFamilyError(f"region {region!r} not available for {family.value}; "
                                     f"choose from {', '.join(REGIONS[family])}")
    if family.restricted:
        return _scan_restricted(family, region, int(n_samples), seed, sigma, x0, y0)
    return _scan_full(family, region, int(n_samples), seed)


# ---------------------------------------------------------------------------
# artifact prediction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Ring:
    center: np.ndarray
    normal: np.ndarray
    radius: float

    def points(self, n=64) -> np.ndarray:
        n_ = self.normal / np.linalg.norm(self.normal)
        helper = np.array([1.0, 0.0, 0.0]) if abs(n_[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = np.cross(n_, helper)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(n_, e1)
        th = 2 * np.pi * np.arange(n) / n
        return self.center + self.radius * (np.cos(th)[:, None] * e1 + np.sin(th)[:, None] * e2)

    def distance(self, pts) -> np.ndarray:
        w = np.asarray(pts, float) - self.center
        n_ = self.normal / np.linalg.norm(self.normal)
        a = w @ n_
        radial = np.linalg.norm(w - a[..., None] * n_, axis=-1)
        return np.hypot(a, radial - self.radius)


class ArtifactKind(enum.Enum):
    CYLINDER_RINGS = "CylinderRings"
    HYPERBOLOID = "Hyperboloid"
    Z_REFLECTION = "ZReflection"


@dataclass
class ArtifactSet:
    kind: ArtifactKind
    params: object
    ring_z: tuple
    rings: list
    description: str

    @property
    def empty(self) -> bool:
        return not self.rings

    def ring_points(self, n=64) -> np.ndarray:
        if not self.rings:
            return np.zeros((0, 3))
        return np.concatenate([r.points(n) for r in self.rings])

    def mask(self, spec: GridSpec, dilation_voxels: float = 2.0) -> np.ndarray:
        """Voxels whose centre lies within ``dilation_voxels`` voxel widths of a ring."""
        out = np.zeros(spec.dims, dtype=bool)
        if not self.rings:
            return out
        centers = spec.centers()
        reach = dilation_voxels * max(spec.spacing)
        for r in self.rings:
            out |= r.distance(centers) <= reach
        return out

    def to_text(self, n_points=64) -> str:
        lines = [f"kind: {self.kind.value}", f"rings: {len(self.rings)}",
                 "ring_z: " + ",".join(f"{z:.17g}" for z in self.ring_z),
                 f"description: {self.description}", "rings_csv:", "cx,cy,cz,nx,ny,nz,radius"]
        for r in self.rings:
            lines.append(",".join(f"{v:.17g}" for v in (*r.center, *r.normal, r.radius)))
        lines += ["points_csv:", "x,y,z"]
        for p in self.ring_points(n_points):
            lines.append(",".join(f"{v:.17g}" for v in p))
        return "\n".join(lines) + "\n"


def predict_artifacts(family, params) -> ArtifactSet:
    """Rings where the apple left projection drops rank.

    For apples the set is the intersection with the cylinder ``g = t``: two
    circles of radius ``t`` about the axis at axial height ``+-sqrt(s)``. For
    the translated apple these are also where the surface meets the
    hyperboloid ``z^2 - (x-x0)^2 - (y-y0)^2 = 1`` (``u = 2``), at ``z = +-r``.
    Lemon families satisfy the condition on ``z > 0``; they return an empty
    set whose description names the only remaining ambiguity, ``z -> -z``.
    """
    family = Family.parse(family)
    if family.kind is SurfaceKind.LEMON:
        return ArtifactSet(ArtifactKind.Z_REFLECTION, params, (), [],
                           "no ring artifacts predicted for lemons; the projection is injective on "
                           "one side of the equatorial plane and only z -> -z pairs collide")
    if family is Family.RESTRICTED_APPLE:
        if not isinstance(params, RestrictedParams):
            raise UnsupportedFamilyError("Restricted_Apple expects RestrictedParams")
        params.validate()
        c = params.center
        axis = np.array([0.0, 0.0, 1.0])
        rings = [Ring(c + z * axis, axis, params.t) for z in (params.r, -params.r)]
        return ArtifactSet(ArtifactKind.HYPERBOLOID, params, (params.r, -params.r), rings,
                           "apple meets the hyperboloid u = 2 (and the cylinder g = t) in two rings")
    if not isinstance(params, TorusParams):
        raise UnsupportedFamilyError("Full7D_Apple expects TorusParams")
    params.validate()
    axis = params.frame.axis
    h = float(np.sqrt(params.s))
    rings = [Ring(params.center + z * axis, axis, params.t) for z in (h, -h)]
    return ArtifactSet(ArtifactKind.CYLINDER_RINGS, params, (h, -h), rings,
                       "apple meets the cylinder g = t in two rings")


def cone_angle(epsilon) -> float:
    """Opening angle in degrees: ``min(2 atan(sqrt((1+e)^2 - 1) / (2+e)), 90)``."""
    eps = float(epsilon)
    if eps < 0:
        raise ValueError("epsilon must be non-negative")
    return min(np.degrees(2.0 * np.arctan(np.sqrt((1.0 + eps) ** 2 - 1.0) / (2.0 + eps))), 90.0)
