"""Hot loops: trilinear sampling/splatting fused with surface quadrature.

Each kernel exists twice: a loop version compiled by numba and a vectorised
numpy version. ``USE_NUMBA`` (see :mod:`spindle_radon._accel`) selects which
one the public entry points dispatch to. Both follow the same node ordering
and the same arithmetic, so they agree to rounding.

Grid convention: voxel ``(i, j, k)`` has its centre at
``origin + (index + 0.5) * spacing``; samples outside the lattice of centres
see zero-valued neighbours (zero padding), which keeps the splat the exact
transpose of the gather.
"""
import math

import numpy as np

from ._accel import USE_NUMBA, njit

CLIP_NONE = 0
CLIP_UNIT_BALL = 1
CLIP_Z_GT_1 = 2
CLIP_CENTER_BALL = 3


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@njit
def _gather_point(values, ox, oy, oz, dx, dy, dz, px, py, pz):
    nx, ny, nz = values.shape
    ux = (px - ox) / dx - 0.5
    uy = (py - oy) / dy - 0.5
    uz = (pz - oz) / dz - 0.5
    i0 = int(math.floor(ux))
    j0 = int(math.floor(uy))
    k0 = int(math.floor(uz))
    fx = ux - i0
    fy = uy - j0
    fz = uz - k0
    acc = 0.0
    for a in range(2):
        i = i0 + a
        if i < 0 or i >= nx:
            continue
        wx = fx if a == 1 else 1.0 - fx
        for b in range(2):
            j = j0 + b
            if j < 0 or j >= ny:
                continue
            wy = fy if b == 1 else 1.0 - fy
            for c in range(2):
                k = k0 + c
                if k < 0 or k >= nz:
                    continue
                wz = fz if c == 1 else 1.0 - fz
                acc += wx * wy * wz * values[i, j, k]
    return acc


@njit
def _splat_point(out, ox, oy, oz, dx, dy, dz, px, py, pz, val):
    nx, ny, nz = out.shape
    ux = (px - ox) / dx - 0.5
    uy = (py - oy) / dy - 0.5
    uz = (pz - oz) / dz - 0.5
    i0 = int(math.floor(ux))
    j0 = int(math.floor(uy))
    k0 = int(math.floor(uz))
    fx = ux - i0
    fy = uy - j0
    fz = uz - k0
    for a in range(2):
        i = i0 + a
        if i < 0 or i >= nx:
            continue
        wx = fx if a == 1 else 1.0 - fx
        for b in range(2):
            j = j0 + b
            if j < 0 or j >= ny:
                continue
            wy = fy if b == 1 else 1.0 - fy
            for c in range(2):
                k = k0 + c
                if k < 0 or k >= nz:
                    continue
                wz = fz if c == 1 else 1.0 - fz
                out[i, j, k] += wx * wy * wz * val


@njit
def _inside(code, px, py, pz, cx, cy, cz):
    if code == 1:
        return px * px + py * py + pz * pz < 1.0
    if code == 2:
        return pz > 1.0
    if code == 3:
        ex = px - cx
        ey = py - cy
        ez = pz - cz
        return ex * ex + ey * ey + ez * ez < 1.0
    return True


@njit
def _surface_pass(values, origin, spacing, centers, rots, s, t, sign, clip,
                  n_psi, n_theta, data, out_params, start, stop, adjoint):
    ox, oy, oz = origin[0], origin[1], origin[2]
    dx, dy, dz = spacing[0], spacing[1], spacing[2]
    dtheta = 2.0 * math.pi / n_theta
    for p in range(start, stop):
        root_s = math.sqrt(s[p])
        half = math.acos(sign[p] * t[p] / root_s)
        dpsi = 2.0 * half / (n_psi - 1)
        cx, cy, cz = centers[p, 0], centers[p, 1], centers[p, 2]
        acc = 0.0
        for i in range(n_psi):
            if i == 0 or i == n_psi - 1:
                continue  # generator endpoints: rho = 0, zero weight
            psi = -half + i * dpsi
            rho = root_s * math.cos(psi) - sign[p] * t[p]
            if rho <= 0.0:
                continue
            zl = root_s * math.sin(psi)
            w_psi = root_s * rho * dpsi * dtheta
            for j in range(n_theta):
                theta = (j + 0.5) * dtheta
                xl = rho * math.cos(theta)
                yl = rho * math.sin(theta)
                px = cx + rots[p, 0, 0] * xl + rots[p, 0, 1] * yl + rots[p, 0, 2] * zl
                py = cy + rots[p, 1, 0] * xl + rots[p, 1, 1] * yl + rots[p, 1, 2] * zl
                pz = cz + rots[p, 2, 0] * xl + rots[p, 2, 1] * yl + rots[p, 2, 2] * zl
                if not _inside(clip[p], px, py, pz, cx, cy, cz):
                    continue
                if adjoint:
                    _splat_point(values, ox, oy, oz, dx, dy, dz, px, py, pz, w_psi * data[p])
                else:
                    acc += w_psi * _gather_point(values, ox, oy, oz, dx, dy, dz, px, py, pz)
        if not adjoint:
            out_params[p] = acc


@njit
def _gather_points_numba(values, origin, spacing, pts, out):
    for n in range(pts.shape[0]):
        out[n] = _gather_point(values, origin[0], origin[1], origin[2],
                               spacing[0], spacing[1], spacing[2],
                               pts[n, 0], pts[n, 1], pts[n, 2])


@njit
def _splat_points_numba(out, origin, spacing, pts, vals):
    for n in range(pts.shape[0]):
        _splat_point(out, origin[0], origin[1], origin[2],
                     spacing[0], spacing[1], spacing[2],
                     pts[n, 0], pts[n, 1], pts[n, 2], vals[n])


# ---------------------------------------------------------------------------
# numpy fallbacks
# ---------------------------------------------------------------------------

def _corner_weights(shape, origin, spacing, pts):
    u = (pts - origin) / spacing - 0.5
    base = np.floor(u).astype(np.int64)
    frac = u - base
    idx, wts = [], []
    for a in (0, 1):
        for b in (0, 1):
            for c in (0, 1):
                off = np.array([a, b, c])
                ijk = base + off
                w = (np.where(off == 1, frac, 1.0 - frac)).prod(axis=1)
                ok = np.all((ijk >= 0) & (ijk < np.asarray(shape)), axis=1)
                flat = np.ravel_multi_index(tuple(np.where(ok[:, None], ijk, 0).T), shape)
                idx.append(flat)
                wts.append(np.where(ok, w, 0.0))
    return np.stack(idx, axis=1), np.stack(wts, axis=1)


def gather_points_numpy(values, origin, spacing, pts):
    idx, w = _corner_weights(values.shape, origin, spacing, pts)
    return (values.reshape(-1)[idx] * w).sum(axis=1)


def splat_points_numpy(out, origin, spacing, pts, vals):
    idx, w = _corner_weights(out.shape, origin, spacing, pts)
    out.reshape(-1)[:] += np.bincount(idx.reshape(-1), weights=(w * vals[:, None]).reshape(-1),
                                      minlength=out.size)


def clip_mask(code, pts, center):
    if code == CLIP_UNIT_BALL:
        return np.einsum("ij,ij->i", pts, pts) < 1.0
    if code == CLIP_Z_GT_1:
        return pts[:, 2] > 1.0
    if code == CLIP_CENTER_BALL:
        d = pts - center
        return np.einsum("ij,ij->i", d, d) < 1.0
    return np.ones(len(pts), dtype=bool)


def surface_nodes_numpy(center, rot, s, t, sign, clip, n_psi, n_theta):
    """Interior quadrature nodes and weights in the same order as the numba kernel."""
    root_s = np.sqrt(s)
    half = np.arccos(sign * t / root_s)
    dpsi = 2.0 * half / (n_psi - 1)
    dtheta = 2.0 * np.pi / n_theta
    psi = -half + np.arange(1, n_psi - 1) * dpsi
    rho = root_s * np.cos(psi) - sign * t
    keep = rho > 0.0
    psi, rho = psi[keep], rho[keep]
    theta = (np.arange(n_theta) + 0.5) * dtheta
    xl = (rho[:, None] * np.cos(theta)).reshape(-1)
    yl = (rho[:, None] * np.sin(theta)).reshape(-1)
    zl = np.repeat(root_s * np.sin(psi), n_theta)
    w = np.repeat(root_s * rho * dpsi * dtheta, n_theta)
    pts = np.stack([
        center[0] + rot[0, 0] * xl + rot[0, 1] * yl + rot[0, 2] * zl,
        center[1] + rot[1, 0] * xl + rot[1, 1] * yl + rot[1, 2] * zl,
        center[2] + rot[2, 0] * xl + rot[2, 1] * yl + rot[2, 2] * zl,
    ], axis=1)
    m = clip_mask(clip, pts, center)
    return pts[m], w[m]


def _surface_pass_numpy(values, origin, spacing, centers, rots, s, t, sign, clip,
                        n_psi, n_theta, data, out_params, start, stop, adjoint):
    for p in range(start, stop):
        pts, w = surface_nodes_numpy(centers[p], rots[p], s[p], t[p], sign[p], clip[p], n_psi, n_theta)
        if adjoint:
            splat_points_numpy(values, origin, spacing, pts, w * data[p])
        else:
            out_params[p] = np.dot(w, gather_points_numpy(values, origin, spacing, pts))


_surface_pass_numba = _surface_pass


def surface_pass(*args, use_numba=None):
    """Dispatch one gather (``adjoint=False``) or splat pass over a parameter range."""
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba:
        _surface_pass_numba(*args)
    else:
        _surface_pass_numpy(*args)


def gather_points(values, origin, spacing, pts, use_numba=None):
    """Trilinear samples of ``values`` at ``pts`` (shape ``(N, 3)``)."""
    values = np.ascontiguousarray(values, dtype=float)
    pts = np.ascontiguousarray(pts, dtype=float).reshape(-1, 3)
    origin = np.asarray(origin, dtype=float)
    spacing = np.asarray(spacing, dtype=float)
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba:
        out = np.empty(len(pts))
        _gather_points_numba(values, origin, spacing, pts, out)
        return out
    return gather_points_numpy(values, origin, spacing, pts)


def splat_points(out, origin, spacing, pts, vals, use_numba=None):
    """Add ``vals`` into ``out`` with trilinear weights (transpose of gather)."""
    pts = np.ascontiguousarray(pts, dtype=float).reshape(-1, 3)
    vals = np.ascontiguousarray(vals, dtype=float).reshape(-1)
    origin = np.asarray(origin, dtype=float)
    spacing = np.asarray(spacing, dtype=float)
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba:
        _splat_points_numba(out, origin, spacing, pts, vals)
    else:
        splat_points_numpy(out, origin, spacing, pts, vals)
    return out
