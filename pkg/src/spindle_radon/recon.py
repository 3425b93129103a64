"""Landweber reconstruction and the ring-artifact experiment."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .errors import DivergenceError, PhantomSupportError, SizeLimitError, UnsupportedFamilyError
from .geometry import QuadratureSpec, SurfaceKind
from .microlocal import Family, predict_artifacts
from .phantoms import PhantomSpec, rasterize, region_predicate
from .transforms import RestrictedParams, SurfaceProjector
from .volume import GridSpec, VoxelGrid


@dataclass
class LinearOperator:
    """A pair of matched maps between arrays of ``in_shape`` and ``out_shape``."""

    forward: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]
    in_shape: tuple
    out_shape: tuple

    @classmethod
    def from_matrix(cls, M, in_shape=None) -> "LinearOperator":
        M = np.asarray(M, dtype=float)
        in_shape = (M.shape[1],) if in_shape is None else tuple(in_shape)
        return cls(lambda x: M @ np.ravel(x), lambda d: (M.T @ d).reshape(in_shape), in_shape, (M.shape[0],))

    @classmethod
    def from_projector(cls, proj: SurfaceProjector, spec: GridSpec) -> "LinearOperator":
        return cls(lambda x: proj.forward(VoxelGrid(spec, x)),
                   lambda d: proj.adjoint(d, spec).values,
                   spec.dims, (len(proj),))


@dataclass
class NormEstimate:
    value: float
    converged: bool
    history: list

    def __float__(self):
        return float(self.value)


def estimate_operator_norm(op: LinearOperator, iters: int = 50, seed: int = 0, rtol: float = 1e-3) -> NormEstimate:
    """Power iteration on ``A^T A``; returns ``||A||`` with its per-iteration history.

    The Rayleigh quotients of power iteration on a positive semidefinite
    matrix are non-decreasing, so ``history`` is too (up to rounding). If the
    last relative change exceeds ``rtol`` the estimate is flagged as not
    converged and a warning is issued.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.in_shape)
    v /= np.linalg.norm(v)
    history = []
    for _ in range(max(1, int(iters))):
        w = op.adjoint(op.forward(v))
        lam = float(np.vdot(v, w))
        history.append(np.sqrt(max(lam, 0.0)))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return NormEstimate(0.0, True, history)
        v = w / nw
    converged = len(history) > 1 and abs(history[-1] - history[-2]) <= rtol * max(history[-1], 1e-300)
    if not converged:
        warnings.warn(f"operator norm estimate not converged after {iters} iterations", RuntimeWarning)
    return NormEstimate(history[-1], converged, history)


@dataclass(frozen=True)
class LandweberConfig:
    step_scale: float = 1.0
    iterations: int = 50
    nonnegativity: bool = False

    def __post_init__(self):
        if not 0.0 < float(self.step_scale) < 2.0:
            raise ValueError(f"step_scale must lie in (0, 2), got {self.step_scale}")
        if int(self.iterations) < 1:
            raise ValueError("iterations must be positive")


@dataclass
class ReconReport:
    residual_norms: list
    volume: Optional[VoxelGrid]
    ring_artifact_energy: float = float("nan")
    background_energy: float = float("nan")
    step: float = float("nan")
    operator_norm: float = float("nan")
    notes: list = field(default_factory=list)

    @property
    def ratio(self) -> float:
        """Ring-to-background energy ratio (``nan`` when undefined)."""
        if not np.isfinite(self.background_energy) or self.background_energy <= 0.0:
            return float("nan")
        return self.ring_artifact_energy / self.background_energy

    def to_text(self) -> str:
        lines = [
            f"iterations: {len(self.residual_norms) - 1}",
            f"operator_norm: {self.operator_norm:.17g}",
            f"step: {self.step:.17g}",
            f"final_residual: {self.residual_norms[-1]:.17g}" if self.residual_norms else "final_residual: nan",
            f"ring_artifact_energy: {self.ring_artifact_energy:.17g}",
            f"background_energy: {self.background_energy:.17g}",
            f"ratio: {self.ratio:.17g}" if np.isfinite(self.ratio) else "ratio: undefined",
        ]
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines) + "\n"

    def residual_csv(self) -> str:
        return "iteration,residual\n" + "".join(f"{k},{r:.17g}\n" for k, r in enumerate(self.residual_norms))


def landweber(data, op: LinearOperator, cfg: LandweberConfig = LandweberConfig(),
              norm: Optional[float] = None, x_init=None) -> ReconReport:
    """``x_{k+1} = x_k + lam A^T (d - A x_k)`` from ``x_0 = 0`` with ``lam = step_scale / ||A||^2``.

    ``residual_norms[k]`` is ``||d - A x_k||``. Raises
    :class:`~spindle_radon.errors.DivergenceError` if the residual grows by
    more than 10% in one step.
    """
    d = np.asarray(data, dtype=float).reshape(op.out_shape)
    if not np.all(np.isfinite(d)):
        raise ValueError("data contain non-finite values")
    if norm is None:
        norm = float(estimate_operator_norm(op))
    norm = float(norm)
    x = np.zeros(op.in_shape) if x_init is None else np.array(x_init, dtype=float)
    if norm == 0.0:
        return ReconReport([float(np.linalg.norm(d))] * (int(cfg.iterations) + 1), x, step=0.0,
                           operator_norm=0.0, notes=["operator is zero"])
    lam = cfg.step_scale / norm ** 2
    r = d - op.forward(x)
    res = [float(np.linalg.norm(r))]
    for _ in range(int(cfg.iterations)):
        x = x + lam * op.adjoint(r)
        if cfg.nonnegativity:
            np.maximum(x, 0.0, out=x)
        r = d - op.forward(x)
        res.append(float(np.linalg.norm(r)))
        if res[-1] > 1.1 * res[-2]:
            raise DivergenceError(f"residual grew from {res[-2]:.6g} to {res[-1]:.6g}")
    return ReconReport(res, x, step=lam, operator_norm=norm)


MAX_DENSE_VOXELS = 12 ** 3
MAX_DENSE_PARAMS = 500


def build_dense_operator(plist: Sequence, kind, quad: QuadratureSpec, spec: GridSpec,
                         use_numba=None) -> np.ndarray:
    """Explicit ``(n_params, n_voxels)`` matrix of the projector (C-order voxel index).

    Row ``i`` is the splat of parameter ``i`` alone; this is the same linear
    map as the forward gather, assembled without ``n_voxels`` forward passes.
    """
    if spec.size > MAX_DENSE_VOXELS:
        raise SizeLimitError(f"grid has {spec.size} voxels; dense oracle allows at most {MAX_DENSE_VOXELS}")
    if len(plist) > MAX_DENSE_PARAMS:
        raise SizeLimitError(f"{len(plist)} parameters; dense oracle allows at most {MAX_DENSE_PARAMS}")
    proj = SurfaceProjector(plist, kind, quad, threads=1)
    M = np.zeros((len(plist), spec.size))
    one = np.ones(len(plist))
    dummy = np.zeros(len(plist))
    for i in range(len(plist)):
        row = np.zeros(spec.dims)
        kernels.surface_pass(row, np.asarray(spec.origin), np.asarray(spec.spacing), proj.centers, proj.rots,
                             proj.s, proj.t, proj.sign, proj.clip, quad.n_psi, quad.n_theta, one, dummy,
                             i, i + 1, True, use_numba=use_numba)
        M[i] = row.reshape(-1)
    return M


# ---------------------------------------------------------------------------
# ring-artifact experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSetup:
    """Grid, data sampling and quadrature of the translated-family experiment.

    Data are sampled on a regular grid of ``p`` values (``n_p`` values in
    ``p_range``) times centres ``(x0, y0)`` (``n_xy`` per axis in
    ``[-xy_half, xy_half]``). For lemons the same set-up is shifted down by
    one unit in ``z``.
    """

    grid_n: int = 20
    grid_half_width: float = 1.0
    lemon_half_width: float = 0.5
    apple_z_range: tuple = (1.0, 3.0)
    lemon_z_range: tuple = (0.0, 1.0)
    n_p: int = 16
    p_range: tuple = (0.4, 36.0)
    n_xy: int = 11
    xy_half: float = 1.5
    quad: QuadratureSpec = QuadratureSpec(40, 80)
    dilation_voxels: float = 2.0
    seed: int = 0

    def grid(self, kind) -> GridSpec:
        if SurfaceKind.parse(kind) is SurfaceKind.APPLE:
            (lo, hi), w = self.apple_z_range, self.grid_half_width
        else:
            (lo, hi), w = self.lemon_z_range, self.lemon_half_width
        nz = max(2, int(round(self.grid_n * (hi - lo) / (2 * w))))
        return GridSpec.from_bounds((self.grid_n, self.grid_n, nz), (-w, -w, lo), (w, w, hi))

    def params(self) -> list:
        ps = np.linspace(*self.p_range, self.n_p)
        xy = np.linspace(-self.xy_half, self.xy_half, self.n_xy)
        return [RestrictedParams(p, a, b) for p in ps for a in xy for b in xy]


def _pole_ring_mask(phantom: PhantomSpec, spec: GridSpec, setup: ExperimentSetup, z_lift: float) -> np.ndarray:
    """Union of predicted apple rings through the top and bottom points of each component.

    A point ``q`` with ``z_q > 1`` lies on a predicted ring of the apple with
    ``t = sqrt(z_q^2 - 1)`` centred anywhere on the circle of radius ``t``
    around ``q``; the rings of all such centres inside the scanned range are
    collected. ``z_lift`` evaluates the construction at ``z + z_lift`` and
    maps it back, which lets the lemon control reuse apple geometry.
    """
    mask = np.zeros(spec.dims, dtype=bool)
    shifted = GridSpec(spec.dims, spec.spacing, (spec.origin[0], spec.origin[1], spec.origin[2] + z_lift))
    angles = np.linspace(0.0, 2 * np.pi, 90, endpoint=False)
    for comp in phantom.components:
        cx, cy, cz = comp.center
        for zq in (cz + z_lift + comp.radius, cz + z_lift - comp.radius):
            if zq <= 1.0:
                continue
            t = np.sqrt(zq * zq - 1.0)
            for a in angles:
                x0, y0 = cx + t * np.cos(a), cy + t * np.sin(a)
                if max(abs(x0), abs(y0)) > setup.xy_half:
                    continue
                arts = predict_artifacts(Family.RESTRICTED_APPLE, RestrictedParams(4 * t * t, x0, y0))
                mask |= arts.mask(shifted, setup.dilation_voxels)
    return mask


def _support_mask(phantom: PhantomSpec, spec: GridSpec, dilation_voxels: float) -> np.ndarray:
    centers = spec.centers()
    pad = dilation_voxels * max(spec.spacing)
    out = np.zeros(spec.dims, dtype=bool)
    for c in phantom.components:
        out |= np.linalg.norm(centers - np.asarray(c.center), axis=-1) <= c.support_radius + pad
    return out


def artifact_experiment(phantom: PhantomSpec, family, cfg: LandweberConfig = LandweberConfig(iterations=30),
                        setup: ExperimentSetup = ExperimentSetup(), threads=None) -> ReconReport:
    """Reconstruct a phantom from noiseless translated-family data and measure ring energy.

    The ring mask is built from predicted apple rings (see
    :func:`_pole_ring_mask`); lemons use the same geometry lifted by one unit
    as a control. Energies are mean squared reconstruction values over the
    ring mask and over an equally sized, seeded random sample of the
    remaining voxels, both excluding the dilated phantom support. Because
    reconstruction error decays away from the object, the notes also carry a
    ratio against a background with the ring mask's distance profile (see
    :func:`_matched_background`).
    """
    family = Family.parse(family)
    if not family.restricted:
        raise UnsupportedFamilyError("the artifact experiment uses the translated families")
    kind = family.kind
    spec = setup.grid(kind)
    region = region_predicate("HalfSpaceZgt1") if kind is SurfaceKind.APPLE else region_predicate("Band")
    for i, c in enumerate(phantom.components):
        if not region.contains_ball(np.asarray(c.center), c.support_radius):
            raise PhantomSupportError(f"component {i} is not inside {region.name} for {family.value}")
        lo, hi = (np.asarray(spec.origin), np.asarray(spec.origin) + np.asarray(spec.spacing) * spec.dims)
        if np.any(np.asarray(c.center) - c.support_radius < lo) or np.any(np.asarray(c.center) + c.support_radius > hi):
            raise PhantomSupportError(f"component {i} does not fit inside the reconstruction grid")

    truth = rasterize(phantom, spec)
    proj = SurfaceProjector(setup.params(), kind, setup.quad, threads)
    op = LinearOperator.from_projector(proj, spec)
    data = op.forward(truth.values)
    if not np.any(truth.values):
        report = ReconReport([0.0], VoxelGrid.zeros(spec), notes=["zero phantom: ratio undefined"])
        return report
    norm = estimate_operator_norm(op, iters=30, seed=setup.seed)
    rep = landweber(data, op, cfg, norm=norm.value)
    vol = VoxelGrid(spec, rep.volume)

    z_lift = 0.0 if kind is SurfaceKind.APPLE else 1.0
    ring = _pole_ring_mask(phantom, spec, setup, z_lift)
    keep_out = _support_mask(phantom, spec, setup.dilation_voxels)
    ring &= ~keep_out
    notes = [f"data: {len(proj)} surfaces", f"norm converged: {norm.converged}"]
    ring_flat = np.flatnonzero(ring.reshape(-1))
    rest = np.flatnonzero((~ring & ~keep_out).reshape(-1))
    notes.insert(0, f"ring voxels: {len(ring_flat)}")
    if len(ring_flat) == 0 or len(rest) == 0:
        return ReconReport(rep.residual_norms, vol, step=rep.step, operator_norm=norm.value,
                           notes=notes + ["empty mask: ratio undefined"])
    rng = np.random.default_rng(setup.seed)
    bg_flat = rng.choice(rest, size=min(len(ring_flat), len(rest)), replace=False)
    vals = vol.values.reshape(-1)
    ring_e = float(np.mean(vals[ring_flat] ** 2))
    bg_e = float(np.mean(vals[bg_flat] ** 2))
    r_idx, b_idx = _matched_background(phantom, spec, ring, ~ring & ~keep_out, setup.seed)
    if len(r_idx):
        matched = float(np.mean(vals[r_idx] ** 2)) / max(float(np.mean(vals[b_idx] ** 2)), np.finfo(float).tiny)
        notes.append(f"distance-matched ratio: {matched:.6g}")
    return ReconReport(rep.residual_norms, vol, ring_e, bg_e, rep.step, norm.value, notes)


def _matched_background(phantom: PhantomSpec, spec: GridSpec, ring: np.ndarray, candidates: np.ndarray, seed: int):
    """Pair ring voxels with background voxels at the same distance from the phantom.

    Distances to the nearest component centre are binned at one voxel width;
    within each bin, equally many ring and background voxels are drawn
    (seeded), so both masks have the same size and the same distance profile.
    """
    centers = spec.centers().reshape(-1, 3)
    dist = np.min([np.linalg.norm(centers - np.asarray(c.center), axis=1) for c in phantom.components], axis=0)
    bins = np.floor(dist / max(spec.spacing)).astype(np.int64)
    ring_flat = np.flatnonzero(ring.reshape(-1))
    cand_flat = np.flatnonzero(candidates.reshape(-1))
    rng = np.random.default_rng(seed)
    keep_r, keep_b = [], []
    for b in np.unique(bins[ring_flat]):
        r_b = ring_flat[bins[ring_flat] == b]
        c_b = cand_flat[bins[cand_flat] == b]
        k = min(len(r_b), len(c_b))
        if k == 0:
            continue
        keep_r.append(rng.choice(r_b, size=k, replace=False) if k < len(r_b) else r_b)
        keep_b.append(rng.choice(c_b, size=k, replace=False))
    if not keep_r:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(keep_r), np.concatenate(keep_b)
