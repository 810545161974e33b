from .fbp import FBPReconstructor, FilterKind, fbp_reconstruct, ram_lak_kernel, ramp_filter
from .geometry import DEFAULT_HALF_EXTENT, FanBeamGeometry, fov_mask, pixel_centers, pixel_pitch
from .projector import FanBeamProjector, adjoint_backproject, forward_project, system_matrix
from .siddon import ray_intersections, siddon_trace

__all__ = [
    "DEFAULT_HALF_EXTENT", "FBPReconstructor", "FanBeamGeometry", "FanBeamProjector", "FilterKind",
    "adjoint_backproject", "fbp_reconstruct", "forward_project", "fov_mask", "pixel_centers",
    "pixel_pitch", "ram_lak_kernel", "ramp_filter", "ray_intersections", "siddon_trace", "system_matrix",
]
