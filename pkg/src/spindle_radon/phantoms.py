"""Analytic test objects and support regions.

A phantom is a sum of components, each a ``Ball`` (indicator), a ``Shell``
(indicator of ``|r - radius| < width/2``) or a ``GaussianBlob`` (``radius``
is the standard deviation). Phantom files are plain text, one component per
line::

    # kind  cx  cy  cz  radius  value  [width]
    ball    0   0   1.6  0.2    1.0
    region  HalfSpaceZgt1
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import PhantomSupportError
from .volume import GridSpec, VoxelGrid

GAUSSIAN_SUPPORT_SIGMAS = 3.0
"""A Gaussian blob counts as supported where it exceeds ``exp(-4.5)`` of its peak."""


class ComponentKind(enum.Enum):
    BALL = "ball"
    SHELL = "shell"
    GAUSSIAN = "gaussian"

    @classmethod
    def parse(cls, value) -> "ComponentKind":
        if isinstance(value, ComponentKind):
            return value
        key = str(value).strip().lower()
        aliases = {"ball": cls.BALL, "shell": cls.SHELL, "gaussian": cls.GAUSSIAN,
                   "gaussianblob": cls.GAUSSIAN, "blob": cls.GAUSSIAN}
        if key not in aliases:
            raise PhantomSupportError(f"unknown component kind {value!r}")
        return aliases[key]


@dataclass(frozen=True)
class Component:
    center: tuple
    radius: float
    value: float = 1.0
    kind: ComponentKind = ComponentKind.BALL
    width: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in np.asarray(self.center, float).reshape(3)))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "kind", ComponentKind.parse(self.kind))
        if not self.radius > 0:
            raise PhantomSupportError(f"component radius must be positive, got {self.radius}")
        if self.kind is ComponentKind.SHELL:
            width = 0.1 * self.radius if self.width is None else float(self.width)
            if not 0 < width < 2 * self.radius:
                raise PhantomSupportError(f"shell width must be in (0, 2 radius), got {width}")
            object.__setattr__(self, "width", width)

    @property
    def support_radius(self) -> float:
        if self.kind is ComponentKind.GAUSSIAN:
            return GAUSSIAN_SUPPORT_SIGMAS * self.radius
        if self.kind is ComponentKind.SHELL:
            return self.radius + self.width / 2
        return self.radius

    def evaluate(self, x) -> np.ndarray:
        r = np.linalg.norm(np.asarray(x, float) - np.asarray(self.center), axis=-1)
        if self.kind is ComponentKind.BALL:
            return np.where(r < self.radius, self.value, 0.0)
        if self.kind is ComponentKind.SHELL:
            return np.where(np.abs(r - self.radius) < self.width / 2, self.value, 0.0)
        return self.value * np.exp(-0.5 * (r / self.radius) ** 2)


def Ball(center, radius, value=1.0) -> Component:
    return Component(center, radius, value, ComponentKind.BALL)


def Shell(center, radius, value=1.0, width=None) -> Component:
    return Component(center, radius, value, ComponentKind.SHELL, width)


def GaussianBlob(center, sigma, value=1.0) -> Component:
    return Component(center, sigma, value, ComponentKind.GAUSSIAN)


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------

RegionPredicate = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Region:
    """A named open set with a point predicate and a ball-containment test."""

    name: str
    contains: RegionPredicate
    contains_ball: Callable[[np.ndarray, float], bool]

    def __call__(self, x):
        return self.contains(np.asarray(x, float))


def region_predicate(name: str, center=(0.0, 0.0), band=(0.0, 1.0)) -> Region:
    """``UnitBall``, ``HalfSpaceZgt1``, ``Band`` (``band[0] < z < band[1]``) or
    ``BallAround`` (unit ball about ``(center[0], center[1], 0)``)."""
    key = str(name).strip()
    if key == "UnitBall":
        return Region(key, lambda x: np.linalg.norm(x, axis=-1) < 1.0,
                      lambda c, r: np.linalg.norm(c) + r < 1.0)
    if key == "HalfSpaceZgt1":
        return Region(key, lambda x: x[..., 2] > 1.0, lambda c, r: c[2] - r > 1.0)
    if key == "Band":
        lo, hi = (float(v) for v in band)
        return Region(key, lambda x: (x[..., 2] > lo) & (x[..., 2] < hi),
                      lambda c, r: c[2] - r > lo and c[2] + r < hi)
    if key == "BallAround":
        c0 = np.array([float(center[0]), float(center[1]), 0.0])
        return Region(key, lambda x: np.linalg.norm(x - c0, axis=-1) < 1.0,
                      lambda c, r: np.linalg.norm(np.asarray(c) - c0) + r < 1.0)
    raise PhantomSupportError(f"unknown region {name!r}")


# ---------------------------------------------------------------------------
# phantom
# ---------------------------------------------------------------------------

@dataclass
class PhantomSpec:
    components: list = field(default_factory=list)
    region: Optional[Region] = None

    def __post_init__(self):
        self.components = list(self.components)
        self.check_support()

    def check_support(self):
        if self.region is None:
            return
        for i, comp in enumerate(self.components):
            if not self.region.contains_ball(np.asarray(comp.center), comp.support_radius):
                raise PhantomSupportError(
                    f"component {i} (centre {comp.center}, support radius {comp.support_radius:g}) "
                    f"is not inside region {self.region.name}")

    def __eq__(self, other):
        if not isinstance(other, PhantomSpec):
            return NotImplemented
        rn = lambda r: None if r is None else r.name
        return self.components == other.components and rn(self.region) == rn(other.region)


def evaluate(spec: PhantomSpec, x) -> np.ndarray:
    x = np.asarray(x, float)
    out = np.zeros(x.shape[:-1])
    for comp in spec.components:
        out = out + comp.evaluate(x)
    return out


def rasterize(spec: PhantomSpec, grid: GridSpec) -> VoxelGrid:
    """Sample at voxel centres (no antialiasing)."""
    return VoxelGrid(grid, evaluate(spec, grid.centers()))


def analytic_mass(spec: PhantomSpec) -> float:
    """Exact integral of the phantom over space."""
    total = 0.0
    for c in spec.components:
        if c.kind is ComponentKind.BALL:
            total += c.value * 4.0 / 3.0 * np.pi * c.radius ** 3
        elif c.kind is ComponentKind.SHELL:
            a, b = c.radius - c.width / 2, c.radius + c.width / 2
            total += c.value * 4.0 / 3.0 * np.pi * (b ** 3 - a ** 3)
        else:
            total += c.value * (2.0 * np.pi) ** 1.5 * c.radius ** 3
    return total


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

def format_phantom(spec: PhantomSpec) -> str:
    lines = ["# kind cx cy cz radius value [width]"]
    for c in spec.components:
        row = [c.kind.value, *(repr(v) for v in c.center), repr(c.radius), repr(c.value)]
        if c.kind is ComponentKind.SHELL:
            row.append(repr(c.width))
        lines.append(" ".join(row))
    if spec.region is not None:
        lines.append(f"region {spec.region.name}")
    return "\n".join(lines) + "\n"


def parse_phantom(text: str) -> PhantomSpec:
    comps, region = [], None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0].lower() == "region":
            region = region_predicate(parts[1])
            continue
        try:
            kind = ComponentKind.parse(parts[0])
            nums = [float(v) for v in parts[1:]]
        except ValueError as exc:
            raise PhantomSupportError(f"line {lineno}: {exc}") from None
        if len(nums) not in (5, 6):
            raise PhantomSupportError(f"line {lineno}: expected cx cy cz radius value [width]")
        width = nums[5] if len(nums) == 6 else None
        comps.append(Component(nums[:3], nums[3], nums[4], kind, width))
    return PhantomSpec(comps, region)


def save_phantom(spec: PhantomSpec, path) -> Path:
    path = Path(path)
    path.write_text(format_phantom(spec))
    return path


def load_phantom(path) -> PhantomSpec:
    return parse_phantom(Path(path).read_text())
