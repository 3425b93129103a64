"""Numerical detector for singular (point, direction) pairs of a voxel volume.

At a voxel ``p`` the volume is multiplied by a separable raised-cosine bump of
radius ``R`` voxels centred at ``p``. The discrete-time Fourier transform of
the windowed patch is sampled along the ray ``lambda * d`` and a power law
``|F| ~ (1 + lambda)^(-N)`` is fitted by least squares in log-log
coordinates; ``lambda`` is measured in frequency bins of the ``2R + 1`` point
patch. A pair is flagged singular when the fitted exponent ``N`` is below the
cutoff and the mid-band magnitude exceeds an amplitude floor.

Only the magnitude is used, and ``|F(-xi)| = |F(xi)|`` for real volumes, so
directions are taken from the upper hemisphere.

All thresholds here are calibration choices for finite grids.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import WindowError
from .transforms import resolve_threads
from .volume import VoxelGrid

DEFAULT_WINDOW_RADIUS = 8
DEFAULT_EXPONENT_CUTOFF = 2.5
DEFAULT_AMPLITUDE_FLOOR = 1e-2
SKIPPED_LOW_BINS = 4
HIGH_FRACTION = 0.8
N_FREQUENCIES = 12


@dataclass(frozen=True)
class WavefrontQuery:
    point: tuple
    direction: tuple
    window_radius: int = DEFAULT_WINDOW_RADIUS
    decay_threshold: float = DEFAULT_EXPONENT_CUTOFF

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if not n > 0:
            raise ValueError("query direction must be nonzero")
        object.__setattr__(self, "direction", tuple(d / n))
        object.__setattr__(self, "point", tuple(float(v) for v in np.asarray(self.point, float).reshape(3)))
        object.__setattr__(self, "window_radius", int(self.window_radius))


@dataclass(frozen=True)
class Detection:
    point: tuple
    direction: tuple
    exponent: float
    amplitude: float = float("nan")


@dataclass
class WavefrontReport:
    detections: list = field(default_factory=list)

    def __len__(self):
        return len(self.detections)

    @property
    def points(self) -> np.ndarray:
        return np.array([d.point for d in self.detections], dtype=float).reshape(-1, 3)

    @property
    def directions(self) -> np.ndarray:
        return np.array([d.direction for d in self.detections], dtype=float).reshape(-1, 3)

    @property
    def exponents(self) -> np.ndarray:
        return np.array([d.exponent for d in self.detections], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "z", "dx", "dy", "dz", "exponent"])
        for d in self.detections:
            w.writerow([repr(float(v)) for v in (*d.point, *d.direction, d.exponent)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "WavefrontReport":
        rows = list(csv.DictReader(io.StringIO(text)))
        dets = [Detection((float(r["x"]), float(r["y"]), float(r["z"])),
                          (float(r["dx"]), float(r["dy"]), float(r["dz"])), float(r["exponent"]))
                for r in rows]
        return cls(dets)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_csv())
        return path


def hemisphere_directions(n: int = 128) -> np.ndarray:
    """Roughly uniform unit vectors with ``z >= 0`` (Fibonacci spiral)."""
    k = np.arange(n) + 0.5
    z = 1.0 - k / n
    phi = np.pi * (3.0 - np.sqrt(5.0)) * k
    r = np.sqrt(1.0 - z * z)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def raised_cosine(radius: int) -> np.ndarray:
    """1-D bump ``cos^2(pi i / (2 (R + 1)))`` on ``|i| <= R``."""
    i = np.arange(-radius, radius + 1)
    return np.cos(np.pi * i / (2.0 * (radius + 1))) ** 2


def fit_frequencies(radius: int) -> np.ndarray:
    """Frequencies (bins of the ``2R + 1`` patch) used for the decay fit."""
    n = 2 * radius + 1
    hi = HIGH_FRACTION * n / 2.0
    if hi <= SKIPPED_LOW_BINS:
        raise WindowError(f"window radius {radius} leaves no frequencies to fit")
    return np.linspace(SKIPPED_LOW_BINS, hi, N_FREQUENCIES)


def _ray_tables(radius: int, directions: np.ndarray):
    n = 2 * radius + 1
    off = np.arange(-radius, radius + 1, dtype=float)
    grid = np.stack(np.meshgrid(off, off, off, indexing="ij"), axis=-1).reshape(-1, 3)
    lam = fit_frequencies(radius)
    phase = 2.0 * np.pi / n * (grid @ directions.T)[:, :, None] * lam[None, None, :]
    phase = phase.reshape(grid.shape[0], -1)
    return np.cos(phase), np.sin(phase), lam


def _fit_exponents(mag: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Minus the least-squares slope of ``log mag`` against ``log(1 + lam)``."""
    x = np.log1p(lam)
    x = x - x.mean()
    y = np.log(np.maximum(mag, np.finfo(float).tiny))
    return -(y @ x) / (x @ x)


def _check_points(idx: np.ndarray, dims, radius: int):
    lo = idx - radius
    hi = idx + radius
    bad = np.flatnonzero(np.any(lo < 0, axis=1) | np.any(hi >= np.asarray(dims), axis=1))
    if bad.size:
        raise WindowError(f"window of radius {radius} around voxel {tuple(idx[bad[0]])} leaves the volume")


def decay_exponents(volume: VoxelGrid, points, directions, window_radius: int = DEFAULT_WINDOW_RADIUS,
                    threads=None, chunk: int = 512):
    """Fitted exponents and normalized amplitudes for every (point, direction).

    ``points`` are integer voxel indices, shape ``(n, 3)``. Returns two
    ``(n, n_dirs)`` arrays. The amplitude is the mean magnitude over the fit
    band divided by the window mass times the value range of the volume, so
    a unit jump across a plane through the window centre scores about 0.1.
    """
    idx = np.asarray(points, dtype=np.int64).reshape(-1, 3)
    dirs = np.asarray(directions, dtype=float).reshape(-1, 3)
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    R = int(window_radius)
    _check_points(idx, volume.dims, R)
    values = np.asarray(volume.values, dtype=float)
    w1 = raised_cosine(R)
    window = (w1[:, None, None] * w1[None, :, None] * w1[None, None, :]).reshape(-1)
    cos_t, sin_t, lam = _ray_tables(R, dirs)
    span = float(values.max() - values.min()) if values.size else 0.0
    scale = window.sum() * (span if span > 0 else 1.0)
    views = np.lib.stride_tricks.sliding_window_view(values, (2 * R + 1,) * 3)

    n = len(idx)
    expo = np.empty((n, len(dirs)))
    amp = np.empty((n, len(dirs)))

    def run(block):
        a, b = block
        sel = idx[a:b] - R
        patches = views[sel[:, 0], sel[:, 1], sel[:, 2]].reshape(b - a, -1)
        patches = (patches - patches.mean(axis=1, keepdims=True)) * window
        re = patches @ cos_t
        im = patches @ sin_t
        mag = np.hypot(re, im).reshape(b - a, len(dirs), len(lam))
        expo[a:b] = _fit_exponents(mag, lam)
        amp[a:b] = mag.mean(axis=2) / scale

    blocks = [(a, min(a + chunk, n)) for a in range(0, n, chunk)]
    workers = resolve_threads(threads)
    if workers == 1 or len(blocks) <= 1:
        for blk in blocks:
            run(blk)
    else:
        with ThreadPoolExecutor(workers) as ex:
            list(ex.map(run, blocks))
    return expo, amp


def interior_points(dims, window_radius: int = DEFAULT_WINDOW_RADIUS, stride: int = 1) -> np.ndarray:
    """All voxel indices whose window fits inside a volume of shape ``dims``."""
    R = int(window_radius)
    axes = [np.arange(R, d - R, stride) for d in dims]
    if any(len(a) == 0 for a in axes):
        raise WindowError(f"volume {tuple(dims)} is too small for window radius {R}")
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)


def _along_direction_maxima(idx, best_dir, best_amp, amp_all, dirs):
    """Keep a point only if its amplitude is not beaten one voxel forward or back along its direction."""
    lookup = {tuple(p): i for i, p in enumerate(idx)}
    keep = np.ones(len(idx), dtype=bool)
    for i, (p, j) in enumerate(zip(idx, best_dir)):
        step = np.rint(dirs[j]).astype(np.int64)
        for nb in (p + step, p - step):
            k = lookup.get(tuple(nb))
            if k is not None and amp_all[k, j] > best_amp[i]:
                keep[i] = False
                break
    return keep


def wf_detect(volume: VoxelGrid, points=None, directions=None, window_radius: int = DEFAULT_WINDOW_RADIUS,
              exponent_cutoff: float = DEFAULT_EXPONENT_CUTOFF, amplitude_floor: float = DEFAULT_AMPLITUDE_FLOOR,
              suppress: bool = True, threads=None) -> WavefrontReport:
    """Scan ``points`` (voxel indices; default every interior voxel) over ``directions``.

    A (point, direction) pair is singular when its fitted exponent is below
    ``exponent_cutoff`` and its amplitude is at least ``amplitude_floor``.
    With ``suppress`` each point reports only its strongest singular
    direction, and only where that amplitude is a local maximum one voxel
    forward and back along the direction, which pins detections to the
    singular support instead of the whole window-wide band around it.
    """
    dirs = hemisphere_directions() if directions is None else np.asarray(directions, dtype=float).reshape(-1, 3)
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    idx = interior_points(volume.dims, window_radius) if points is None else np.asarray(points, np.int64).reshape(-1, 3)
    expo, amp = decay_exponents(volume, idx, dirs, window_radius, threads)
    singular = (expo < exponent_cutoff) & (amp >= amplitude_floor)
    spec = volume.spec
    centre = lambda p: tuple(float(v) for v in np.asarray(spec.origin) + (p + 0.5) * np.asarray(spec.spacing))
    dets = []
    if not suppress:
        for i, j in zip(*np.nonzero(singular)):
            dets.append(Detection(centre(idx[i]), tuple(dirs[j]), float(expo[i, j]), float(amp[i, j])))
        return WavefrontReport(dets)
    masked = np.where(singular, amp, -np.inf)
    best = np.argmax(masked, axis=1)
    best_amp = masked[np.arange(len(idx)), best]
    has = np.isfinite(best_amp)
    keep = has & _along_direction_maxima(idx, best, best_amp, amp, dirs)
    for i in np.flatnonzero(keep):
        j = best[i]
        dets.append(Detection(centre(idx[i]), tuple(dirs[j]), float(expo[i, j]), float(amp[i, j])))
    return WavefrontReport(dets)


def query(volume: VoxelGrid, q: WavefrontQuery) -> tuple:
    """``(exponent, amplitude, singular)`` for one query at the voxel nearest ``q.point``."""
    spec = volume.spec
    p = np.rint((np.asarray(q.point) - np.asarray(spec.origin)) / np.asarray(spec.spacing) - 0.5).astype(np.int64)
    expo, amp = decay_exponents(volume, p[None], np.asarray(q.direction)[None], q.window_radius, threads=1)
    e, a = float(expo[0, 0]), float(amp[0, 0])
    return e, a, bool(e < q.decay_threshold and a >= DEFAULT_AMPLITUDE_FLOOR)
