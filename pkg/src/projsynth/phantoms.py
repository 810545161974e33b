"""Procedural phantoms standing in for clinical slices.

Every phantom is a union of simple shapes (disks, rotated rectangles,
ellipses) rasterised at pixel centres; overlapping shapes keep the larger
intensity, except where a shape is declared as an overwrite layer (the
anatomical classes paint organs over a body outline).
"""

import math
from dataclasses import dataclass

import numpy as np

from .ct.geometry import DEFAULT_HALF_EXTENT, pixel_centers
from .errors import InvalidArgumentError
from .rng import RngState, as_rng

PHANTOM_CLASSES = ("disks", "bars", "ellipses", "head-like", "body-like")


@dataclass
class PhantomSpec:
    kind: str = "disks"
    size: int = 64
    count_range: tuple = (1, 4)
    intensity_range: tuple = (0.3, 1.0)
    seed: int = 0
    support_radius: float = 9.0
    half_extent: float = DEFAULT_HALF_EXTENT

    def __post_init__(self):
        if self.kind not in PHANTOM_CLASSES:
            raise InvalidArgumentError(f"unsupported phantom class {self.kind!r}; choose from {PHANTOM_CLASSES}")
        if self.size < 32 or self.size & (self.size - 1):
            raise InvalidArgumentError("phantom size must be a power of two >= 32")
        lo, hi = self.intensity_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise InvalidArgumentError("intensities must lie in [0, 1]")
        if self.count_range[0] < 1 or self.count_range[1] < self.count_range[0]:
            raise InvalidArgumentError("count_range must satisfy 1 <= low <= high")


@dataclass(frozen=True)
class Shape:
    """Ellipse (``kind='ellipse'``, disks have equal axes) or rectangle, rotated by ``angle``."""

    kind: str
    cx: float
    cy: float
    a: float
    b: float
    angle: float
    value: float
    overwrite: bool = False

    def contains(self, x, y):
        c, s = math.cos(self.angle), math.sin(self.angle)
        u = (x - self.cx) * c + (y - self.cy) * s
        v = -(x - self.cx) * s + (y - self.cy) * c
        if self.kind == "ellipse":
            return (u / self.a) ** 2 + (v / self.b) ** 2 <= 1.0
        return (np.abs(u) <= self.a) & (np.abs(v) <= self.b)

    @property
    def reach(self):
        return math.hypot(self.a, self.b) if self.kind == "rect" else max(self.a, self.b)


def _place(gen, reach, radius):
    room = max(radius - reach, 0.0)
    r = room * math.sqrt(gen.uniform())
    phi = gen.uniform(0, 2 * math.pi)
    return r * math.cos(phi), r * math.sin(phi)


def _random_shapes(spec, gen):
    lo, hi = spec.intensity_range
    count = int(gen.integers(spec.count_range[0], spec.count_range[1] + 1))
    R = spec.support_radius
    shapes = []
    if spec.kind == "disks":
        for _ in range(count):
            r = gen.uniform(0.12, 0.4) * R
            cx, cy = _place(gen, r, R)
            shapes.append(Shape("ellipse", cx, cy, r, r, 0.0, gen.uniform(lo, hi)))
    elif spec.kind == "bars":
        for _ in range(count):
            half_len = gen.uniform(0.25, 0.6) * R
            half_wid = gen.uniform(0.05, 0.12) * R
            ang = gen.uniform(0, math.pi)
            cx, cy = _place(gen, math.hypot(half_len, half_wid), R)
            shapes.append(Shape("rect", cx, cy, half_len, half_wid, ang, gen.uniform(lo, hi)))
    elif spec.kind == "ellipses":
        for _ in range(count):
            a, b = gen.uniform(0.1, 0.45) * R, gen.uniform(0.1, 0.45) * R
            cx, cy = _place(gen, max(a, b), R)
            shapes.append(Shape("ellipse", cx, cy, a, b, gen.uniform(0, math.pi), gen.uniform(lo, hi)))
    elif spec.kind == "head-like":
        a, b = gen.uniform(0.8, 0.95) * R, gen.uniform(0.65, 0.8) * R
        ang = gen.uniform(-0.2, 0.2) + math.pi / 2
        skull = gen.uniform(max(lo, 0.8), 1.0)
        shapes.append(Shape("ellipse", 0.0, 0.0, a, b, ang, skull))
        shapes.append(Shape("ellipse", 0.0, 0.0, 0.9 * a, 0.9 * b, ang, gen.uniform(0.15, 0.25), True))
        for _ in range(count):
            sa, sb = gen.uniform(0.08, 0.22) * R, gen.uniform(0.05, 0.15) * R
            cx, cy = _place(gen, max(sa, sb), 0.6 * min(a, b))
            shapes.append(Shape("ellipse", cx, cy, sa, sb, gen.uniform(0, math.pi),
                                gen.uniform(0.25, 0.5), True))
    else:  # body-like
        a, b = gen.uniform(0.85, 0.98) * R, gen.uniform(0.55, 0.7) * R
        shapes.append(Shape("ellipse", 0.0, 0.0, a, b, gen.uniform(-0.1, 0.1), gen.uniform(0.25, 0.35)))
        shapes.append(Shape("ellipse", 0.0, -0.65 * b, 0.12 * R, 0.12 * R, 0.0, gen.uniform(0.8, 1.0), True))
        for _ in range(count):
            sa, sb = gen.uniform(0.12, 0.3) * R, gen.uniform(0.08, 0.2) * R
            cx, cy = _place(gen, max(sa, sb), 0.55 * min(a, b))
            shapes.append(Shape("ellipse", cx, cy + 0.1 * b, sa, sb, gen.uniform(0, math.pi),
                                gen.uniform(0.4, 0.6), True))
    return shapes


def render(shapes, size, half_extent=DEFAULT_HALF_EXTENT):
    x, y = pixel_centers((size, size), half_extent)
    img = np.zeros((size, size))
    for shape in shapes:
        inside = shape.contains(x, y)
        if shape.overwrite:
            img[inside] = shape.value
        else:
            img[inside] = np.maximum(img[inside], shape.value)
    return np.clip(img, 0.0, 1.0)


def generate_phantoms_with_shapes(spec, n):
    if n < 1:
        raise InvalidArgumentError("phantom count must be >= 1")
    base = RngState(spec.seed, stream=hash_kind(spec.kind))
    images, all_shapes = [], []
    for i in range(n):
        gen = base.child(i).generator()
        shapes = _random_shapes(spec, gen)
        images.append(render(shapes, spec.size, spec.half_extent))
        all_shapes.append(shapes)
    return np.stack(images), all_shapes


def generate_phantoms(spec, n):
    """``n`` deterministic phantoms of shape ``(n, size, size)`` with values in [0, 1]."""
    return generate_phantoms_with_shapes(spec, n)[0]


def hash_kind(kind):
    return PHANTOM_CLASSES.index(kind) + 101


def gaussian_blobs(size, half_extent=DEFAULT_HALF_EXTENT, blobs=((1.0, -2.0, 2.0, 1.0), (-3.0, 1.5, 1.5, 0.6))):
    """Smooth phantom: sum of isotropic Gaussians ``(cx, cy, width, amplitude)``."""
    x, y = pixel_centers((size, size), half_extent)
    img = np.zeros((size, size))
    for cx, cy, w, amp in blobs:
        img += amp * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * w**2))
    return img


def uniform_disk(size, radius, value=1.0, half_extent=DEFAULT_HALF_EXTENT):
    x, y = pixel_centers((size, size), half_extent)
    return np.where(np.hypot(x, y) <= radius, value, 0.0)
