"""Apple and lemon surface transforms and their discrete adjoints.

Two families are supported:

* the full seven-parameter family (:class:`~spindle_radon.geometry.TorusParams`),
  integrated over the part of the surface inside the open unit ball;
* the translated family :class:`RestrictedParams` ``(p, x0, y0)`` with vertical
  axis, ``t = sqrt(p/4)`` and ``s = t**2 + 1``. Apples are clipped to
  ``{z > 1}``, lemons to the unit ball around ``(x0, y0, 0)``.

A field is either a callable ``f(points) -> values`` or a
:class:`~spindle_radon.volume.VoxelGrid` (sampled trilinearly). For voxel
fields the projector below is linear in the voxel values and
:meth:`SurfaceProjector.adjoint` is its exact transpose.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from . import kernels
from .errors import InvalidParamsError
from .geometry import QuadratureSpec, SurfaceKind, TorusParams, grad_psi_raw, in_parameter_set_Y, psi_raw
from .volume import GridSpec, VoxelGrid

ScalarField = Union[Callable[[np.ndarray], np.ndarray], VoxelGrid]


@dataclass(frozen=True)
class RestrictedParams:
    """Translated spindle torus with axis ``e3``, centre ``(x0, y0, 0)`` and ``p = 4 t**2``."""

    p: float
    x0: float = 0.0
    y0: float = 0.0

    def __post_init__(self):
        for name in ("p", "x0", "y0"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def t(self) -> float:
        return float(np.sqrt(self.p / 4.0))

    @property
    def s(self) -> float:
        return self.p / 4.0 + 1.0

    @property
    def r(self) -> float:
        return float(np.sqrt(self.s))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x0, self.y0, 0.0])

    def validate(self, index=None) -> "RestrictedParams":
        if not (np.isfinite(self.p) and np.isfinite(self.x0) and np.isfinite(self.y0)):
            raise InvalidParamsError("non-finite restricted parameters", index)
        if self.p <= 0.0:
            raise InvalidParamsError(f"p must be positive, got p={self.p}", index)
        return self

    def to_torus(self, kind) -> TorusParams:
        return TorusParams(self.s, self.t, (self.x0, self.y0, 0.0), 0.0, 0.0, kind)


AnyParams = Union[TorusParams, RestrictedParams]


@dataclass
class DataGrid:
    """Transform values aligned with the parameter list that produced them."""

    params: list
    values: np.ndarray
    kind: SurfaceKind | None = None

    def __post_init__(self):
        self.params = list(self.params)
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if len(self.values) != len(self.params):
            raise ValueError(f"{len(self.values)} values for {len(self.params)} parameters")

    def __len__(self):
        return len(self.params)


def resolve_threads(threads=None) -> int:
    if threads is None or int(threads) <= 0:
        return os.cpu_count() or 1
    return int(threads)


def _chunks(n, workers):
    bounds = np.linspace(0, n, min(workers, max(n, 1)) + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


class SurfaceProjector:
    """Discrete transform for a fixed parameter list, surface kind and quadrature.

    ``forward`` evaluates every surface integral independently, so its output
    does not depend on the number of workers. ``adjoint`` splits the
    parameters into one contiguous block per worker, accumulates each block in
    a private volume and sums the blocks in block order; the result is
    bitwise reproducible for a fixed worker count.
    """

    def __init__(self, plist: Sequence[AnyParams], kind=None, quad: QuadratureSpec = QuadratureSpec(),
                 threads=None, clip_full=kernels.CLIP_UNIT_BALL):
        self.plist = list(plist)
        self.kind = None if kind is None else SurfaceKind.parse(kind)
        self.quad = quad
        self.threads = resolve_threads(threads)
        n = len(self.plist)
        self.centers = np.zeros((n, 3))
        self.rots = np.zeros((n, 3, 3))
        self.s = np.zeros(n)
        self.t = np.zeros(n)
        self.sign = np.zeros(n)
        self.clip = np.zeros(n, dtype=np.int64)
        for i, prm in enumerate(self.plist):
            if isinstance(prm, RestrictedParams):
                if self.kind is None:
                    raise InvalidParamsError("restricted parameters need an explicit surface kind", i)
                prm.validate(i)
                torus = prm.to_torus(self.kind)
                clip = kernels.CLIP_Z_GT_1 if self.kind is SurfaceKind.APPLE else kernels.CLIP_CENTER_BALL
            elif isinstance(prm, TorusParams):
                torus = prm if self.kind is None else prm.with_kind(self.kind)
                torus.validate(i)
                if clip_full == kernels.CLIP_UNIT_BALL and not in_parameter_set_Y(torus):
                    raise InvalidParamsError("singular points meet the closed unit ball", i)
                clip = clip_full
            else:
                raise InvalidParamsError(f"unsupported parameter type {type(prm).__name__}", i)
            self.centers[i] = torus.center
            self.rots[i] = torus.frame.R
            self.s[i] = torus.s
            self.t[i] = torus.t
            self.sign[i] = torus.sign
            self.clip[i] = clip

    def __len__(self):
        return len(self.plist)

    def _pass(self, values, spec, data, out, start, stop, adjoint, use_numba):
        kernels.surface_pass(values, np.asarray(spec.origin), np.asarray(spec.spacing),
                             self.centers, self.rots, self.s, self.t, self.sign, self.clip,
                             self.quad.n_psi, self.quad.n_theta, data, out, start, stop, adjoint,
                             use_numba=use_numba)

    def forward(self, vol: VoxelGrid, use_numba=None) -> np.ndarray:
        n = len(self)
        out = np.zeros(n)
        if n == 0:
            return out
        values = np.ascontiguousarray(vol.values, dtype=float)
        dummy = np.zeros(n)
        blocks = _chunks(n, self.threads)
        if len(blocks) == 1:
            self._pass(values, vol.spec, dummy, out, 0, n, False, use_numba)
        else:
            with ThreadPoolExecutor(len(blocks)) as ex:
                list(ex.map(lambda b: self._pass(values, vol.spec, dummy, out, b[0], b[1], False, use_numba), blocks))
        return out

    def adjoint(self, data, spec: GridSpec, use_numba=None) -> VoxelGrid:
        data = np.ascontiguousarray(np.asarray(data, dtype=float).reshape(-1))
        n = len(self)
        if len(data) != n:
            raise ValueError(f"{len(data)} data values for {n} parameters")
        dummy = np.zeros(n)
        blocks = _chunks(n, self.threads)
        if not blocks:
            return VoxelGrid.zeros(spec)
        partial = [np.zeros(spec.dims) for _ in blocks]
        if len(blocks) == 1:
            self._pass(partial[0], spec, data, dummy, 0, n, True, use_numba)
        else:
            with ThreadPoolExecutor(len(blocks)) as ex:
                list(ex.map(lambda ib: self._pass(partial[ib[0]], spec, data, dummy, ib[1][0], ib[1][1], True,
                                                  use_numba), enumerate(blocks)))
        total = partial[0]
        for extra in partial[1:]:
            total += extra
        return VoxelGrid(spec, total)


# ---------------------------------------------------------------------------
# scalar transforms
# ---------------------------------------------------------------------------

def _surface_integral(f: ScalarField, torus: TorusParams, clip_code: int, quad: QuadratureSpec) -> float:
    if isinstance(f, VoxelGrid):
        proj = SurfaceProjector([torus], None, quad, threads=1, clip_full=clip_code)
        return float(proj.forward(f)[0])
    pts, w = kernels.surface_nodes_numpy(torus.center, torus.frame.R, torus.s, torus.t, torus.sign,
                                         clip_code, quad.n_psi, quad.n_theta)
    if len(w) == 0:
        return 0.0
    return float(np.dot(w, np.asarray(f(pts), dtype=float).reshape(-1)))


def surface_transform(f: ScalarField, params: TorusParams, quad: QuadratureSpec = QuadratureSpec(),
                      clip: int = kernels.CLIP_UNIT_BALL) -> float:
    """Integral of ``f`` over the surface ``params`` describes (kind included).

    With the default ``clip`` the parameters must lie in the valid set (both
    singular points outside the closed unit ball); ``CLIP_NONE`` integrates
    over the whole apple or lemon.
    """
    params.validate()
    if clip == kernels.CLIP_UNIT_BALL and not in_parameter_set_Y(params):
        raise InvalidParamsError("singular points meet the closed unit ball")
    return _surface_integral(f, params, clip, quad)


def apple_transform(f: ScalarField, params: TorusParams, quad: QuadratureSpec = QuadratureSpec(),
                    clip: int = kernels.CLIP_UNIT_BALL) -> float:
    return surface_transform(f, params.with_kind(SurfaceKind.APPLE), quad, clip)


def lemon_transform(f: ScalarField, params: TorusParams, quad: QuadratureSpec = QuadratureSpec(),
                    clip: int = kernels.CLIP_UNIT_BALL) -> float:
    return surface_transform(f, params.with_kind(SurfaceKind.LEMON), quad, clip)


def smoothed_delta_integral(f: Callable[[np.ndarray], np.ndarray], params: TorusParams,
                            epsilon: float = 1e-2, spacing: float = None) -> float:
    """Volume sum of ``|grad Psi| delta_eps(Psi) f`` over a dense voxel grid.

    ``delta_eps`` is a Gaussian of standard deviation ``epsilon`` (units of
    ``Psi``, i.e. length squared). By the coarea formula this tends to the
    unclipped surface integral of ``f`` as ``epsilon -> 0``, independently of
    the surface parametrization. On the surface ``|grad Psi| = 2 sqrt(s)``, so
    the default spacing resolves the smoothed shell with about one voxel per
    standard deviation of its width.
    """
    params.validate()
    s, t = params.s, params.t
    root_s = np.sqrt(s)
    if spacing is None:
        spacing = epsilon / (2.0 * root_s)
    rho_max = root_s - params.sign * t
    reach = np.hypot(rho_max, root_s) + 8.0 * epsilon / root_s
    # an irrational offset keeps voxel centres off the axis, where Psi has a kink
    n = int(np.ceil(2 * reach / spacing))
    axis = params.center[:, None] - reach + (np.arange(n) + 0.5 + 1 / np.pi) * spacing
    Y, Z = np.meshgrid(axis[1], axis[2], indexing="ij")
    total = 0.0
    norm = 1.0 / (np.sqrt(2 * np.pi) * epsilon)
    for x in axis[0]:
        pts = np.column_stack([np.full(Y.size, x), Y.ravel(), Z.ravel()])
        val = psi_raw(params.sign, s, t, params.center, params.alpha, params.beta, pts)
        near = np.abs(val) < 8.0 * epsilon
        if not np.any(near):
            continue
        p = pts[near]
        grad = grad_psi_raw(params.sign, t, params.center, params.alpha, params.beta, p)
        dens = norm * np.exp(-0.5 * (val[near] / epsilon) ** 2)
        total += float(np.sum(np.linalg.norm(grad, axis=1) * dens * np.asarray(f(p), dtype=float)))
    return total * spacing ** 3


def restricted_clip(kind) -> int:
    return kernels.CLIP_Z_GT_1 if SurfaceKind.parse(kind) is SurfaceKind.APPLE else kernels.CLIP_CENTER_BALL


def restricted_transform(f: ScalarField, rp: RestrictedParams, kind,
                         quad: QuadratureSpec = QuadratureSpec()) -> float:
    """Apple integral over ``{z > 1}`` or lemon integral over the unit ball about ``(x0, y0, 0)``."""
    rp.validate()
    kind = SurfaceKind.parse(kind)
    return _surface_integral(f, rp.to_torus(kind), restricted_clip(kind), quad)


def restricted_nodes(rp: RestrictedParams, kind, quad: QuadratureSpec = QuadratureSpec()):
    """Clipped quadrature nodes and weights of a restricted surface."""
    rp.validate()
    kind = SurfaceKind.parse(kind)
    torus = rp.to_torus(kind)
    return kernels.surface_nodes_numpy(torus.center, torus.frame.R, torus.s, torus.t, torus.sign,
                                       restricted_clip(kind), quad.n_psi, quad.n_theta)


# ---------------------------------------------------------------------------
# batched
# ---------------------------------------------------------------------------

def forward_project(f: VoxelGrid, plist: Sequence[AnyParams], kind=None,
                    quad: QuadratureSpec = QuadratureSpec(), threads=None) -> DataGrid:
    proj = SurfaceProjector(plist, kind, quad, threads)
    return DataGrid(plist, proj.forward(f), proj.kind)


def adjoint_project(data, plist: Sequence[AnyParams], kind, quad: QuadratureSpec,
                    spec: GridSpec, threads=None) -> VoxelGrid:
    values = data.values if isinstance(data, DataGrid) else data
    return SurfaceProjector(plist, kind, quad, threads).adjoint(values, spec)
