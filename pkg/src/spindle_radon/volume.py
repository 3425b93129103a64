"""Regular voxel grids and their on-disk format.

A volume is stored as a raw little-endian float32 payload (x index fastest)
next to a small JSON header::

    {"dims": [nx, ny, nz], "spacing": [...], "origin": [...],
     "dtype": "f32", "order": "x-fastest"}

In memory, ``values[i, j, k]`` is the sample at the voxel centre
``origin + ((i, j, k) + 0.5) * spacing``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels


@dataclass(frozen=True)
class GridSpec:
    dims: tuple
    spacing: tuple
    origin: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError(f"grid dims must be three positive integers, got {self.dims}")
        spacing = tuple(float(v) for v in np.broadcast_to(np.asarray(self.spacing, float), 3))
        if min(spacing) <= 0 or not np.all(np.isfinite(spacing)):
            raise ValueError(f"grid spacing must be positive, got {self.spacing}")
        origin = tuple(float(v) for v in np.broadcast_to(np.asarray(self.origin, float), 3))
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def from_bounds(cls, dims, lower, upper) -> "GridSpec":
        """Grid whose voxels tile the box ``[lower, upper]`` exactly."""
        dims = np.broadcast_to(np.asarray(dims, dtype=int), 3)
        lower = np.broadcast_to(np.asarray(lower, dtype=float), 3)
        upper = np.broadcast_to(np.asarray(upper, dtype=float), 3)
        return cls(tuple(dims), tuple((upper - lower) / dims), tuple(lower))

    @classmethod
    def cube(cls, n: int, half_width: float = 1.0, center=(0.0, 0.0, 0.0)) -> "GridSpec":
        c = np.asarray(center, dtype=float)
        return cls.from_bounds(n, c - half_width, c + half_width)

    @property
    def shape(self) -> tuple:
        return self.dims

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def voxel_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self):
        """Voxel-centre coordinates along each axis."""
        return tuple(o + (np.arange(n) + 0.5) * d for o, n, d in zip(self.origin, self.dims, self.spacing))

    def centers(self) -> np.ndarray:
        """All voxel centres, shape ``dims + (3,)``."""
        X, Y, Z = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([X, Y, Z], axis=-1)

    def to_header(self) -> dict:
        return {"dims": list(self.dims), "spacing": list(self.spacing), "origin": list(self.origin),
                "dtype": "f32", "order": "x-fastest"}


@dataclass
class VoxelGrid:
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.spec.dims:
            raise ValueError(f"values shape {self.values.shape} does not match dims {self.spec.dims}")

    @classmethod
    def zeros(cls, spec: GridSpec) -> "VoxelGrid":
        return cls(spec, np.zeros(spec.dims))

    @property
    def dims(self):
        return self.spec.dims

    @property
    def spacing(self):
        return self.spec.spacing

    @property
    def origin(self):
        return self.spec.origin

    def sample(self, points) -> np.ndarray:
        """Trilinear interpolation with zero padding outside the grid."""
        pts = np.asarray(points, dtype=float)
        out = kernels.gather_points(self.values, self.origin, self.spacing, pts.reshape(-1, 3))
        return out.reshape(pts.shape[:-1])

    def integral(self) -> float:
        return float(self.values.sum() * self.spec.voxel_volume)

    def __eq__(self, other):
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return self.spec == other.spec and np.array_equal(self.values, other.values)


def _header_path(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def save_volume(vol: VoxelGrid, path) -> Path:
    """Write ``path`` (raw f32, x-fastest) and ``path.json`` (header)."""
    path = Path(path)
    vol.values.astype("<f4").ravel(order="F").tofile(path)
    _header_path(path).write_text(json.dumps(vol.spec.to_header(), indent=2) + "\n")
    return path


def load_volume(path) -> VoxelGrid:
    path = Path(path)
    header = json.loads(_header_path(path).read_text())
    if header.get("dtype", "f32") != "f32" or header.get("order", "x-fastest") != "x-fastest":
        raise ValueError(f"{path}: unsupported volume encoding {header.get('dtype')}/{header.get('order')}")
    spec = GridSpec(header["dims"], header["spacing"], header["origin"])
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != spec.size:
        raise ValueError(f"{path}: payload has {raw.size} samples, header expects {spec.size}")
    values = raw.astype(float).reshape(spec.dims, order="F")
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{path}: non-finite voxel values")
    return VoxelGrid(spec, values)
