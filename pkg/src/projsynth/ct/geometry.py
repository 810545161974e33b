"""Fan-beam acquisition geometry with a flat detector."""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgumentError

DEFAULT_HALF_EXTENT = 10.0


def _even_angles(n):
    return tuple(2.0 * math.pi * np.arange(n) / n)


@dataclass(frozen=True)
class FanBeamGeometry:
    """Circular fan-beam scan.

    The source sits at ``source_distance * (cos b, sin b)`` for view angle ``b``;
    the flat detector is centred at ``-detector_distance * (cos b, sin b)`` and
    runs along ``(-sin b, cos b)``. Element ``d`` has its centre at offset
    ``((d + 0.5) / detector_count - 0.5) * detector_total_width``.
    """

    source_distance: float = 40.0
    detector_distance: float = 40.0
    detector_count: int = 512
    detector_total_width: float = 41.3
    num_views: int = 512
    view_angles: tuple = field(default=None)

    def __post_init__(self):
        if self.view_angles is None:
            object.__setattr__(self, "view_angles", _even_angles(self.num_views))
        else:
            object.__setattr__(self, "view_angles", tuple(float(a) for a in self.view_angles))
        self._validate()

    def _validate(self):
        vals = [self.source_distance, self.detector_distance, self.detector_total_width]
        if not all(math.isfinite(v) for v in vals):
            raise InvalidArgumentError("geometry distances must be finite")
        if self.source_distance <= 0 or self.detector_distance <= 0:
            raise InvalidArgumentError("source and detector distances must be positive")
        if self.detector_total_width <= 0:
            raise InvalidArgumentError("detector_total_width must be positive")
        if int(self.detector_count) != self.detector_count or self.detector_count < 2:
            raise InvalidArgumentError("detector_count must be an integer >= 2")
        if int(self.num_views) != self.num_views or self.num_views < 1:
            raise InvalidArgumentError("num_views must be a positive integer")
        angles = np.asarray(self.view_angles)
        if angles.shape != (self.num_views,) or not np.all(np.isfinite(angles)):
            raise InvalidArgumentError("view_angles must hold num_views finite values")
        if self.num_views > 1:
            steps = np.diff(angles)
            if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
                raise InvalidArgumentError("view_angles must be strictly increasing and evenly spaced")

    @classmethod
    def desk(cls, views=128, detectors=128):
        """Default distances with a reduced view and detector count."""
        return cls(detector_count=detectors, num_views=views)

    @property
    def detector_spacing(self):
        return self.detector_total_width / self.detector_count

    @property
    def magnification(self):
        return (self.source_distance + self.detector_distance) / self.source_distance

    @property
    def fov_radius(self):
        half_fan = math.atan(0.5 * self.detector_total_width / (self.source_distance + self.detector_distance))
        return self.source_distance * math.sin(half_fan)

    @property
    def angle_step(self):
        if self.num_views > 1:
            return self.view_angles[1] - self.view_angles[0]
        return 2.0 * math.pi

    def detector_offsets(self):
        d = np.arange(self.detector_count)
        return ((d + 0.5) / self.detector_count - 0.5) * self.detector_total_width

    def ray_endpoints(self):
        """Source and detector-element positions, each of shape (views, detectors, 2)."""
        beta = np.asarray(self.view_angles)
        axis = np.stack([np.cos(beta), np.sin(beta)], axis=-1)
        along = np.stack([-np.sin(beta), np.cos(beta)], axis=-1)
        offsets = self.detector_offsets()
        src = np.broadcast_to(self.source_distance * axis[:, None, :],
                              (self.num_views, self.detector_count, 2))
        det = -self.detector_distance * axis[:, None, :] + offsets[None, :, None] * along[:, None, :]
        return np.array(src), det

    def to_dict(self):
        return {
            "source_distance": float(self.source_distance),
            "detector_distance": float(self.detector_distance),
            "detector_count": int(self.detector_count),
            "detector_total_width": float(self.detector_total_width),
            "num_views": int(self.num_views),
            "view_angles": [float(a) for a in self.view_angles],
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**{k: data[k] for k in ("source_distance", "detector_distance", "detector_count",
                                                "detector_total_width", "num_views")},
                       view_angles=data.get("view_angles"))
        except KeyError as exc:
            raise InvalidArgumentError(f"geometry is missing field {exc}") from None

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def key(self):
        """Hashable identity used to cache system matrices."""
        return (float(self.source_distance), float(self.detector_distance), int(self.detector_count),
                float(self.detector_total_width), int(self.num_views), self.view_angles)


def pixel_pitch(shape, half_extent=DEFAULT_HALF_EXTENT):
    """Pixel side length; the grid width spans ``2 * half_extent``."""
    return 2.0 * half_extent / shape[1]


def pixel_centers(shape, half_extent=DEFAULT_HALF_EXTENT):
    """Centre coordinates ``(x, y)`` of every pixel.

    Row ``i`` covers ``y`` in ``[y0 + i*p, y0 + (i+1)*p]`` with ``y0 = -rows*p/2``;
    column ``j`` covers ``x`` likewise, starting at ``-half_extent``.
    """
    rows, cols = shape
    p = pixel_pitch(shape, half_extent)
    x = -cols * p / 2 + (np.arange(cols) + 0.5) * p
    y = -rows * p / 2 + (np.arange(rows) + 0.5) * p
    return np.meshgrid(x, y)


def fov_mask(shape, geom, half_extent=DEFAULT_HALF_EXTENT, margin=1.0):
    x, y = pixel_centers(shape, half_extent)
    return np.hypot(x, y) <= margin * geom.fov_radius
