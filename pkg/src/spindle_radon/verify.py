"""Seeded numerical identity suites for the geometry and microlocal modules.

Each check compares a closed form with an independent route (brute-force
linear algebra, central finite differences or an analytic integral) over a
batch of random samples and records the worst error against a fixed
tolerance. Reports are plain ``key: value`` text and are bitwise
reproducible for a fixed seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import microlocal as ml
from .fdiff import central_jacobian, relative_error
from .geometry import (QuadratureSpec, SurfaceKind, TorusParams, frame_rows, grad_psi_raw,
                       parametrize_surface, psi_raw, singular_points, surface_area)

SUITES = ("geometry", "microlocal")


@dataclass
class Check:
    name: str
    samples: int
    max_error: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_error) and self.max_error <= self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: samples={self.samples} max_error={self.max_error:.3e} " \
               f"tolerance={self.tolerance:.1e}{extra}"


@dataclass
class SuiteReport:
    suite: str
    samples: int
    seed: int
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_text(self) -> str:
        lines = [f"suite: {self.suite}", f"samples: {self.samples}", f"seed: {self.seed}",
                 f"checks: {len(self.checks)}", f"failures: {sum(not c.passed for c in self.checks)}",
                 f"status: {'PASS' if self.passed else 'FAIL'}"]
        lines += [c.line() for c in self.checks]
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------

def _random_tori(rng, n):
    t = rng.uniform(0.3, 1.5, n)
    s = t ** 2 * rng.uniform(1.2, 4.0, n)
    x0 = rng.uniform(-2.0, 2.0, (n, 3))
    alpha = rng.uniform(0.0, 2 * np.pi, n)
    beta = rng.uniform(0.0, np.pi / 2, n)
    return s, t, x0, alpha, beta


def _off_axis_points(rng, x0, alpha, beta, n):
    """Random points at cylindrical distance at least 0.2 from each axis."""
    rho = rng.uniform(0.2, 3.0, n)
    th = rng.uniform(0.0, 2 * np.pi, n)
    local = np.column_stack([rho * np.cos(th), rho * np.sin(th), rng.uniform(-2.5, 2.5, n)])
    return x0 + np.einsum("nji,nj->ni", frame_rows(alpha, beta), local)


def random_restricted_samples(kind, n, rng, min_abs_u=0.05) -> ml.CanonicalSampleRestricted:
    """Samples in the coordinate domain: ``z > 1`` for apples, ``0 < z < 1`` for lemons.

    Points with ``|u| < min_abs_u`` are redrawn. They belong to nearly
    degenerate tori (``p -> 0``), where the determinant carries a factor
    ``u^4`` far below what a finite-difference Jacobian can resolve.
    """
    apple = SurfaceKind.parse(kind) is SurfaceKind.APPLE
    out = np.zeros((0, 6))
    while len(out) < n:
        m = 2 * (n - len(out))
        x0 = rng.uniform(-1.0, 1.0, m)
        y0 = rng.uniform(-1.0, 1.0, m)
        rho = rng.uniform(0.1, 2.0, m)
        th = rng.uniform(0.0, 2 * np.pi, m)
        z = rng.uniform(1.05, 3.0, m) if apple else rng.uniform(0.05, 0.95, m)
        sigma = rng.choice([-1.0, 1.0], m) * rng.uniform(0.5, 2.0, m)
        u = (rho * rho + z * z - 1.0) / (rho * rho)
        cand = np.column_stack([sigma, x0, y0, x0 + rho * np.cos(th), y0 + rho * np.sin(th), z])
        out = np.concatenate([out, cand[np.abs(u) >= min_abs_u]])
    return ml.CanonicalSampleRestricted.from_vector(out[:n])


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def _check_frames(rng, n):
    alpha = rng.uniform(0.0, 2 * np.pi, n)
    beta = rng.uniform(0.0, np.pi / 2, n)
    rows = frame_rows(alpha, beta)
    eye = np.eye(3)
    A = np.einsum("nki,nkj->nij", rows[:, :2], rows[:, :2])
    errs = [
        np.abs(rows @ rows.transpose(0, 2, 1) - eye).max(),
        np.abs(np.linalg.det(rows) - 1.0).max(),
        np.abs(A - A.transpose(0, 2, 1)).max(),
        np.abs(A @ A - A).max(),
        np.abs(np.trace(A, axis1=1, axis2=2) - 2.0).max(),
        np.abs(np.einsum("nij,nj->ni", A, rows[:, 2])).max(),
    ]
    return Check("frame_orthonormal_projector", n, float(max(errs)), 1e-13,
                 "R^T R = I, det R = 1, A = A^T = A^2, tr A = 2, A r3 = 0")


def _check_psi_forms(rng, n):
    worst = 0.0
    for kind in SurfaceKind:
        s, t, x0, alpha, beta = _random_tori(rng, n)
        x = _off_axis_points(rng, x0, alpha, beta, n)
        expanded = psi_raw(kind.sign, s, t, x0, alpha, beta, x)
        xp = np.einsum("nij,nj->ni", frame_rows(alpha, beta), x - x0)
        squared = (np.hypot(xp[:, 0], xp[:, 1]) + kind.sign * t) ** 2 + xp[:, 2] ** 2 - s
        scale = np.abs(squared) + s
        worst = max(worst, float(relative_error(expanded, squared, scale).max()))
    return Check("psi_algebraic_forms_agree", 2 * n, worst, 1e-12, "scale |psi| + s")


def _check_grad_psi(rng, n):
    worst = 0.0
    for kind in SurfaceKind:
        s, t, x0, alpha, beta = _random_tori(rng, n)
        x = _off_axis_points(rng, x0, alpha, beta, n)
        exact = grad_psi_raw(kind.sign, t, x0, alpha, beta, x)
        fd = central_jacobian(lambda V: psi_raw(kind.sign, s, t, x0, alpha, beta, V), x,
                              1e-6 * np.maximum(1.0, np.abs(x)))[:, 0, :]
        err = np.linalg.norm(fd - exact, axis=1) / np.linalg.norm(exact, axis=1)
        worst = max(worst, float(err.max()))
    return Check("grad_psi_vs_central_differences", 2 * n, worst, 1e-6)


def _check_nodes_on_surface(rng, n_tori=8):
    worst = 0.0
    count = 0
    s, t, x0, alpha, beta = _random_tori(rng, n_tori)
    for kind in SurfaceKind:
        for i in range(n_tori):
            prm = TorusParams(s[i], t[i], x0[i], alpha[i], beta[i], kind)
            q = parametrize_surface(prm, QuadratureSpec(33, 32))
            live = q.x_prime[:, 0] ** 2 + q.x_prime[:, 1] ** 2 > 0
            val = psi_raw(kind.sign, prm.s, prm.t, prm.center, prm.alpha, prm.beta, q.points[live])
            worst = max(worst, float(np.abs(val).max() / prm.s))
            count += int(live.sum())
    return Check("quadrature_nodes_on_surface", count, worst, 1e-9, "|psi| / s")


def _check_endpoints(rng, n_tori=8):
    worst = 0.0
    s, t, x0, alpha, beta = _random_tori(rng, n_tori)
    for kind in SurfaceKind:
        for i in range(n_tori):
            prm = TorusParams(s[i], t[i], x0[i], alpha[i], beta[i], kind)
            q = parametrize_surface(prm, QuadratureSpec(9, 4))
            top, bottom = singular_points(prm)
            ends = q.points.reshape(9, 4, 3)
            d = max(np.linalg.norm(ends[0] - bottom, axis=1).max(), np.linalg.norm(ends[-1] - top, axis=1).max())
            worst = max(worst, float(d / np.sqrt(prm.s)))
    return Check("generator_endpoints_are_singular_points", 2 * n_tori, worst, 1e-12)


def _check_area():
    worst = 0.0
    for kind in SurfaceKind:
        prm = TorusParams(4.0, 1.0, kind=kind)
        q = parametrize_surface(prm, QuadratureSpec(256, 256))
        worst = max(worst, abs(q.area / surface_area(prm) - 1.0))
    return Check("area_s4_t1_at_256x256", 2, worst, 1e-3, "vs closed-form surface of revolution")


def geometry_suite(samples=1000, seed=0) -> list:
    rng = np.random.default_rng(seed)
    n = int(samples)
    return [_check_frames(rng, n), _check_psi_forms(rng, n), _check_grad_psi(rng, n),
            _check_nodes_on_surface(rng), _check_endpoints(rng), _check_area()]


# ---------------------------------------------------------------------------
# microlocal
# ---------------------------------------------------------------------------

def full_phase_fd(kind, c: ml.CanonicalSampleFull, rel_step=1e-6) -> np.ndarray:
    """Central differences of ``sigma * Psi`` in ``(s, t, x0, alpha, beta, x)``, shape ``(n, 10)``."""
    s = ml.s_from_sample(kind, c)
    V = np.column_stack([s, c.t, c.x0, c.alpha, c.beta, c.x])
    f = lambda W: ml.phase_function_full(kind, c.sigma, W[:, 0], W[:, 1], W[:, 2:5], W[:, 5], W[:, 6], W[:, 7:10])
    return central_jacobian(f, V, rel_step * np.maximum(1.0, np.abs(V)))[:, 0, :]


def full_phase_closed(kind, c: ml.CanonicalSampleFull) -> np.ndarray:
    d = ml.phase_derivatives_full(kind, c)
    return np.column_stack([d.dS, d.dT, d.gradX0, d.dAlpha, d.dBeta, d.gradX])


def restricted_phase_fd(c: ml.CanonicalSampleRestricted, rel_step=1e-6) -> np.ndarray:
    """Central differences of ``sigma (p - h^2/g4)`` in ``(p, x0, y0, x)``, shape ``(n, 6)``."""
    f = ml.restricted_fields(c)
    p = f.h ** 2 / f.g4
    V = np.column_stack([p, c.x0, c.y0, c.x])
    fun = lambda W: ml.phase_function_restricted(c.sigma, W[:, 0], W[:, 1], W[:, 2], W[:, 3:6])
    return central_jacobian(fun, V, rel_step * np.maximum(1.0, np.abs(V)))[:, 0, :]


def restricted_phase_closed(c: ml.CanonicalSampleRestricted) -> np.ndarray:
    d = ml.phase_derivatives_restricted(c)
    return np.column_stack([d.dP, d.dX0, d.dY0, d.gradX])


def _derivative_error(fd, closed, sigma):
    """Componentwise error relative to ``max(|closed|, |sigma|)``."""
    scale = np.maximum(np.abs(closed), np.abs(sigma)[:, None])
    return relative_error(fd, closed, scale)


def _check_plane_determinants(rng, n):
    worst = 0.0
    for kind in SurfaceKind:
        c = ml.random_full_samples(kind, n, rng)
        M, closed = ml.plane_projector_factor(kind, c)
        worst = max(worst, float(relative_error(np.linalg.det(M), closed).max()))
    return Check("det_I_pm_tA_over_g", 2 * n, worst, 1e-10, "(1 -+ t/g)^2 vs LU determinant")


def _check_sylvester(rng, n):
    worst = 0.0
    n_pairs = max(1, n // 10)
    for _ in range(n_pairs):
        m, k = rng.integers(1, 7, 2)
        A = rng.normal(size=(m, k)) / np.sqrt(k)
        B = rng.normal(size=(k, m)) / np.sqrt(m)
        a, b = ml.sylvester_check(A, B)
        worst = max(worst, abs(a - b) / max(abs(a), abs(b), 1e-300))
    return Check("sylvester_det_identity", n_pairs, float(worst), 1e-12)


def _check_full_derivatives(rng, n):
    worst = 0.0
    for kind in SurfaceKind:
        c = ml.random_full_samples(kind, n, rng)
        err = _derivative_error(full_phase_fd(kind, c), full_phase_closed(kind, c), c.sigma)
        worst = max(worst, float(err.max()))
    return Check("full_phase_derivatives_vs_fd", 2 * n, worst, 1e-6, "d_s, d_t, grad_x0, d_alpha, d_beta, grad_x")


def _check_restricted_derivatives(rng, n):
    worst = 0.0
    for kind in SurfaceKind:
        c = random_restricted_samples(kind, n, rng)
        err = _derivative_error(restricted_phase_fd(c), restricted_phase_closed(c), c.sigma)
        worst = max(worst, float(err.max()))
    return Check("restricted_phase_derivatives_vs_fd", 2 * n, worst, 1e-6, "d_p, d_x0, d_y0, grad_x")


def _check_gradx0_determinant(rng, n):
    worst = 0.0
    for kind in SurfaceKind:
        c = ml.random_full_samples(kind, n, rng)
        closed = ml.det_gradx0_block(kind, c)
        fd = np.linalg.det(ml.gradx0_fd_jacobian(kind, c))
        # the closed form vanishes on g = t; measure against the size of its factors there
        scale = np.maximum(np.abs(closed), (2 * np.abs(c.sigma)) ** 3 * 1e-3)
        worst = max(worst, float(relative_error(fd, closed, scale).max()))
    return Check("det_grad_x0_block_vs_fd", 2 * n, worst, 1e-5, "-(2 sigma)^3 (1 -+ t/g)")


def _cylinder_samples(rng, n):
    cyl = ml.CylinderPoint(rng.uniform(0, 2 * np.pi, n), rng.choice([-1.0, 1.0], n) * rng.uniform(0.2, 2.0, n),
                           rng.uniform(0.3, 1.5, n))
    return ml.cylinder_sample(rng.choice([-1.0, 1.0], n) * rng.uniform(0.5, 2.0, n), rng.uniform(-2, 2, (n, 3)),
                              rng.uniform(0, 2 * np.pi, n), rng.uniform(0.1, np.pi / 2 - 0.1, n), cyl)


def _check_printed_m(rng, n):
    c = _cylinder_samples(rng, n)
    err = relative_error(ml.det_M_cylinder(c), ml.det_M_cylinder_closed(c))
    return Check("det_M_assembled_vs_closed_form", n, float(err.max()), 1e-10, "-16 sigma^2 z' t cos(beta)")


def _check_true_minors(rng, n):
    c = _cylinder_samples(rng, n)
    closed_a, closed_b = ml.cylinder_minors_closed(c)
    worst = 0.0
    for angle, closed in (("alpha", closed_a), ("beta", closed_b)):
        fd = np.linalg.det(ml.m_matrix_fd("apple", c, angle))
        analytic = np.linalg.det(ml.m_matrix_true("apple", c, angle))
        scale = 8.0 * c.sigma ** 2 * ml._full_fields(c).xp[:, 2] ** 2
        worst = max(worst, float(relative_error(fd, closed, scale).max()),
                    float(relative_error(analytic, closed, scale).max()))
    return Check("cylinder_minors_vs_fd", n, worst, 1e-5, "8 sigma^2 z'^2 sin(beta) sin(theta), 8 sigma^2 z'^2 cos(theta)")


def _check_restricted_determinant(rng, n):
    worst = 0.0
    for kind in SurfaceKind:
        c = random_restricted_samples(kind, n, rng)
        closed = ml.det_restricted_jacobian(kind, c)
        fd = np.linalg.det(ml.restricted_projection_fd_jacobian(kind, c))
        worst = max(worst, float(relative_error(fd, closed, ml.restricted_det_scale(c)).max()))
    return Check("restricted_projection_det_vs_fd", 2 * n, worst, 1e-5, "-16 z sigma^2 u^4 (u - 2)")


def _check_m3(rng, n):
    worst = 0.0
    for kind in SurfaceKind:
        c = random_restricted_samples(kind, n, rng)
        closed = ml.det_m3(c)
        M = ml.m3_matrix(c)
        f = ml.restricted_fields(c)
        # entries of M3 are O(h u) so its determinant scales like h^2 u (|u| + 2)
        scale = np.maximum(np.abs(closed), f.h ** 2 * np.abs(f.u) * (np.abs(f.u) + 2.0))
        worst = max(worst, float(relative_error(np.linalg.det(M), closed, scale).max()))
    return Check("det_M3_vs_lu", 2 * n, worst, 1e-10, "-h^2 u (u - 2)")


def _check_homogeneity(rng, n):
    worst = 0.0
    for kind in SurfaceKind:
        c = ml.random_full_samples(kind, n, rng)
        lam = rng.uniform(0.5, 3.0, n)
        scaled = ml.CanonicalSampleFull(c.sigma * lam, c.t, c.x0, c.alpha, c.beta, c.x)
        a = ml.left_projection_full(kind, c)
        b = ml.left_projection_full(kind, scaled)
        deriv = list(ml.PROJECTION_DERIVATIVE_COLUMNS)
        base = list(ml.PROJECTION_BASE_COLUMNS)
        e1 = relative_error(b[:, deriv], lam[:, None] * a[:, deriv], np.abs(lam[:, None] * a[:, deriv]) + 1e-300)
        e2 = np.abs(b[:, base] - a[:, base])
        worst = max(worst, float(e1.max()), float(e2.max()))
    return Check("left_projection_sigma_homogeneity", 2 * n, worst, 1e-13)


def microlocal_suite(samples=1000, seed=0) -> list:
    rng = np.random.default_rng(seed)
    n = int(samples)
    return [_check_plane_determinants(rng, n), _check_sylvester(rng, n), _check_full_derivatives(rng, n),
            _check_restricted_derivatives(rng, n), _check_gradx0_determinant(rng, n), _check_printed_m(rng, n),
            _check_true_minors(rng, n), _check_restricted_determinant(rng, n), _check_m3(rng, n),
            _check_homogeneity(rng, n)]


def run_suite(suite="all", samples=1000, seed=0) -> SuiteReport:
    if suite not in SUITES + ("all",):
        raise ValueError(f"unknown suite {suite!r}; choose from all, {', '.join(SUITES)}")
    checks = []
    if suite in ("all", "geometry"):
        checks += geometry_suite(samples, seed)
    if suite in ("all", "microlocal"):
        checks += microlocal_suite(samples, seed)
    return SuiteReport(suite, int(samples), int(seed), checks)
